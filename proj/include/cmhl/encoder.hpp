#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cmhl/data.hpp"
#include "cmhl/ops.hpp"
#include "cmhl/params.hpp"

namespace cmhl {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden = 64;
  std::size_t ffn_dim = 256;
  std::size_t max_positions = kMaxSequenceLength;
  double dropout = 0.1;

  void validate(std::size_t max_sequence_length = 0) const {
    if (heads == 0 || hidden == 0 || hidden % heads != 0) {
      throw ConfigError("encoder hidden size must be a positive multiple of the head count");
    }
    if (ffn_dim == 0) throw ConfigError("encoder ffn_dim must be positive");
    if (max_positions < 1 || max_positions < max_sequence_length) {
      throw ConfigError("encoder max_positions must cover the maximum sequence length");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }
};

/// Attention and feed-forward weights of one pre-norm block. Linear weights
/// are stored [out, in].
struct EncoderLayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w_in, b_in, w_out, b_out;
};

struct EncoderParams {
  Tensor token_embedding;     // [vocab, d]
  Tensor position_embedding;  // [max_positions, d]
  std::vector<EncoderLayerParams> layers;
  Tensor final_gain, final_bias;  // applied after the last block when layers > 0
};

/// Per-layer attention probabilities [B·H, n, n], filled on request.
struct EncoderTrace {
  std::vector<Tensor> attention;
};

inline constexpr double kMaskedLogit = -1e9;

class Encoder {
 public:
  Encoder() = default;

  Encoder(EncoderConfig config, std::size_t vocab_size, Rng& rng) : config_(config) {
    config_.validate();
    const std::size_t d = config_.hidden, f = config_.ffn_dim;
    params_.token_embedding = normal_param({vocab_size, d}, rng);
    params_.position_embedding = normal_param({config_.max_positions, d}, rng);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      EncoderLayerParams p;
      p.ln1_gain = ones_param({d});
      p.ln1_bias = zeros_param({d});
      p.wq = normal_param({d, d}, rng);
      p.bq = zeros_param({d});
      p.wk = normal_param({d, d}, rng);
      p.bk = zeros_param({d});
      p.wv = normal_param({d, d}, rng);
      p.bv = zeros_param({d});
      p.wo = normal_param({d, d}, rng);
      p.bo = zeros_param({d});
      p.ln2_gain = ones_param({d});
      p.ln2_bias = zeros_param({d});
      p.w_in = normal_param({f, d}, rng);
      p.b_in = zeros_param({f});
      p.w_out = normal_param({d, f}, rng);
      p.b_out = zeros_param({d});
      params_.layers.push_back(std::move(p));
    }
    params_.final_gain = ones_param({d});
    params_.final_bias = zeros_param({d});
  }

  const EncoderConfig& config() const { return config_; }
  EncoderParams& params() { return params_; }
  const EncoderParams& params() const { return params_; }
  std::size_t vocab_size() const { return params_.token_embedding.dim(0); }

  /// H⁽⁰⁾: token plus learned position embeddings, [B, n, d].
  Tensor embed(const Batch& batch, const ForwardContext& ctx = {}) const {
    if (batch.seq_len > config_.max_positions) {
      throw IndexError("sequence length " + std::to_string(batch.seq_len) + " exceeds max_positions");
    }
    std::vector<std::size_t> positions(batch.token_ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % batch.seq_len;
    Tensor tok = embedding(params_.token_embedding, batch.token_ids, {batch.batch, batch.seq_len});
    Tensor pos = embedding(params_.position_embedding, positions, {batch.batch, batch.seq_len});
    return dropout(add(tok, pos), config_.dropout, ctx.rng, ctx.training);
  }

  /// L pre-norm blocks (self-attention, then GELU feed-forward, each with a
  /// residual) followed by a final layer norm. Identity when L = 0.
  Tensor encode(const Tensor& h0, const std::vector<std::uint8_t>& mask, const ForwardContext& ctx = {},
                EncoderTrace* trace = nullptr) const {
    if (h0.rank() != 3 || h0.dim(2) != config_.hidden) throw ShapeError("encode: expected [B, n, d] input");
    const std::size_t B = h0.dim(0), n = h0.dim(1), H = config_.heads;
    if (mask.size() != B * n) throw ShapeError("encode: mask shape does not match input");
    if (config_.layers == 0) return h0;

    std::vector<double> mask_bias(B * H * n * n, 0.0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (!mask[b * n + j]) mask_bias[((b * H + h) * n + i) * n + j] = kMaskedLogit;
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(config_.hidden / H));

    Tensor x = h0;
    for (std::size_t l = 0; l < params_.layers.size(); ++l) {
      const auto& p = params_.layers[l];
      Tensor a = layer_norm(x, p.ln1_gain, p.ln1_bias);
      Tensor q = split_heads(linear(a, p.wq, p.bq), H);
      Tensor k = split_heads(linear(a, p.wk, p.bk), H);
      Tensor v = split_heads(linear(a, p.wv, p.bv), H);
      Tensor scores = add_constant(scale(bmm_nt(q, k), score_scale), mask_bias);
      Tensor probs = softmax(scores);
      if (trace) trace->attention.push_back(probs);
      Tensor attended = linear(merge_heads(bmm(probs, v), H), p.wo, p.bo);
      x = add(x, dropout(attended, config_.dropout, ctx.rng, ctx.training));

      Tensor f = layer_norm(x, p.ln2_gain, p.ln2_bias);
      f = linear(gelu(linear(f, p.w_in, p.b_in)), p.w_out, p.b_out);
      x = add(x, dropout(f, config_.dropout, ctx.rng, ctx.training));
      if (!all_finite(x.data())) {
        throw NumericError("encoder layer " + std::to_string(l) + " produced non-finite activations");
      }
    }
    return layer_norm(x, params_.final_gain, params_.final_bias);
  }

  /// h_[CLS] for every row of the batch, [B, d].
  Tensor forward(const Batch& batch, const ForwardContext& ctx = {}, EncoderTrace* trace = nullptr) const {
    return cls_pool(encode(embed(batch, ctx), batch.mask, ctx, trace));
  }

  ParamList parameters() const {
    ParamList out{{"encoder.token_embedding", params_.token_embedding, true},
                  {"encoder.position_embedding", params_.position_embedding, true}};
    for (std::size_t l = 0; l < params_.layers.size(); ++l) {
      const auto& p = params_.layers[l];
      const std::string pre = "encoder.layer" + std::to_string(l) + ".";
      out.push_back({pre + "ln1.gain", p.ln1_gain, false});
      out.push_back({pre + "ln1.bias", p.ln1_bias, false});
      out.push_back({pre + "attn.wq", p.wq, true});
      out.push_back({pre + "attn.bq", p.bq, false});
      out.push_back({pre + "attn.wk", p.wk, true});
      out.push_back({pre + "attn.bk", p.bk, false});
      out.push_back({pre + "attn.wv", p.wv, true});
      out.push_back({pre + "attn.bv", p.bv, false});
      out.push_back({pre + "attn.wo", p.wo, true});
      out.push_back({pre + "attn.bo", p.bo, false});
      out.push_back({pre + "ln2.gain", p.ln2_gain, false});
      out.push_back({pre + "ln2.bias", p.ln2_bias, false});
      out.push_back({pre + "ffn.w_in", p.w_in, true});
      out.push_back({pre + "ffn.b_in", p.b_in, false});
      out.push_back({pre + "ffn.w_out", p.w_out, true});
      out.push_back({pre + "ffn.b_out", p.b_out, false});
    }
    if (!params_.layers.empty()) {
      out.push_back({"encoder.final_norm.gain", params_.final_gain, false});
      out.push_back({"encoder.final_norm.bias", params_.final_bias, false});
    }
    return out;
  }

  static Tensor cls_pool(const Tensor& hidden) { return select_position(hidden, 0); }

 private:
  EncoderConfig config_;
  EncoderParams params_;
};

}  // namespace cmhl
