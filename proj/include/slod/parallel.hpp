#pragma once

#include <exception>
#include <mutex>

namespace slod {

/// Collects the first exception thrown inside an OpenMP loop body so it can
/// be rethrown on the calling thread.
class ParallelErrors {
public:
    template <class F>
    void run(F&& body) noexcept {
        try {
            body();
        } catch (...) {
            std::lock_guard<std::mutex> lock(mutex_);
            if (!first_) first_ = std::current_exception();
        }
    }

    void rethrow() const {
        if (first_) std::rethrow_exception(first_);
    }

private:
    std::mutex mutex_;
    std::exception_ptr first_;
};

/// Sets the worker count for subsequent parallel regions (no-op without OpenMP).
void set_thread_count(int threads);
int thread_count();

} // namespace slod
