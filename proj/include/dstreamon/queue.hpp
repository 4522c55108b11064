#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>

namespace dstreamon {

// Bounded FIFO queue for cross-thread hand-off. Two overflow styles:
// try_push drops the new element (callers count the drop), push blocks.
template <typename T>
class BoundedQueue {
  public:
    explicit BoundedQueue(size_t capacity) : capacity_(capacity) {}

    bool try_push(T item) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (closed_ || q_.size() >= capacity_) return false;
            q_.push_back(std::move(item));
        }
        cv_pop_.notify_one();
        return true;
    }

    // Blocks until space is available or the queue is closed.
    bool push(T item) {
        {
            std::unique_lock<std::mutex> lock(mu_);
            cv_push_.wait(lock, [&] { return closed_ || q_.size() < capacity_; });
            if (closed_) return false;
            q_.push_back(std::move(item));
        }
        cv_pop_.notify_one();
        return true;
    }

    std::optional<T> pop(std::chrono::milliseconds timeout) {
        std::unique_lock<std::mutex> lock(mu_);
        if (!cv_pop_.wait_for(lock, timeout, [&] { return closed_ || !q_.empty(); }))
            return std::nullopt;
        if (q_.empty()) return std::nullopt;  // closed and drained
        T item = std::move(q_.front());
        q_.pop_front();
        cv_push_.notify_one();
        return item;
    }

    std::optional<T> try_pop() {
        std::lock_guard<std::mutex> lock(mu_);
        if (q_.empty()) return std::nullopt;
        T item = std::move(q_.front());
        q_.pop_front();
        cv_push_.notify_one();
        return item;
    }

    void close() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            closed_ = true;
        }
        cv_pop_.notify_all();
        cv_push_.notify_all();
    }

    bool closed() const {
        std::lock_guard<std::mutex> lock(mu_);
        return closed_;
    }

    size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return q_.size();
    }

  private:
    size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_pop_;
    std::condition_variable cv_push_;
    std::deque<T> q_;
    bool closed_ = false;
};

}  // namespace dstreamon
