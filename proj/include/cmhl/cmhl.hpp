#pragma once

#include "cmhl/errors.hpp"
#include "cmhl/tensor.hpp"
#include "cmhl/random.hpp"
#include "cmhl/ops.hpp"
#include "cmhl/gradcheck.hpp"
#include "cmhl/affect_schema.hpp"
#include "cmhl/mh_schema.hpp"
#include "cmhl/data.hpp"
#include "cmhl/params.hpp"
#include "cmhl/encoder.hpp"
#include "cmhl/heads.hpp"
#include "cmhl/mh_gating.hpp"
#include "cmhl/optim.hpp"
#include "cmhl/metrics.hpp"
#include "cmhl/model.hpp"
#include "cmhl/prefetch.hpp"
#include "cmhl/trainer.hpp"
#include "cmhl/checkpoint.hpp"
#include "cmhl/config.hpp"
#include "cmhl/gradcheck_suites.hpp"
#include "cmhl/run.hpp"
