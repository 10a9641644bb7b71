#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>

namespace cmhl {

/// Single-producer single-consumer queue with a fixed capacity.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  /// Blocks while full. Returns false once the queue has been cancelled.
  bool push(T value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || cancelled_; });
    if (cancelled_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  /// Blocks while empty; nullopt after close() once drained, or on cancel().
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_ || cancelled_; });
    if (cancelled_ || items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
  }

  void cancel() {
    std::lock_guard lock(mu_);
    cancelled_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  bool cancelled_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
};

/// Runs `produce(emit)` on a worker thread; the consumer drains with next().
/// Items arrive in production order, so consumers see the same sequence
/// regardless of scheduling. A producer exception is rethrown from next().
template <class T>
class Prefetcher {
 public:
  Prefetcher(std::function<void(const std::function<bool(T)>&)> produce, std::size_t capacity)
      : queue_(capacity) {
    worker_ = std::thread([this, produce = std::move(produce)] {
      try {
        produce([this](T item) { return queue_.push(std::move(item)); });
      } catch (...) {
        std::lock_guard lock(error_mu_);
        error_ = std::current_exception();
      }
      queue_.close();
    });
  }

  Prefetcher(const Prefetcher&) = delete;
  Prefetcher& operator=(const Prefetcher&) = delete;

  ~Prefetcher() {
    queue_.cancel();
    if (worker_.joinable()) worker_.join();
  }

  std::optional<T> next() {
    auto item = queue_.pop();
    if (!item) {
      std::lock_guard lock(error_mu_);
      if (error_) std::rethrow_exception(error_);
    }
    return item;
  }

 private:
  BoundedQueue<T> queue_;
  std::mutex error_mu_;
  std::exception_ptr error_;
  std::thread worker_;
};

}  // namespace cmhl
