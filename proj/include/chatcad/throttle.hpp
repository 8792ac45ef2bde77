#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "chatcad/llm.hpp"

namespace chatcad::llm {

// Seconds on a monotonic timeline; tests substitute a fake clock.
using ClockFn = std::function<double()>;
ClockFn steadyClock();

enum class ThrottlePolicy { Wait, FailFast };

struct Admission {
    double admittedAt = 0.0;
    double waitedSeconds = 0.0;
};

// At most `limit` admissions in any window (t - window, t]. Admissions are
// granted in arrival order.
class SlidingWindowThrottle {
public:
    SlidingWindowThrottle(int limit, double windowSeconds = 3600.0, ClockFn clock = steadyClock(),
                          Sleeper sleeper = realSleeper());

    // Reserves a slot. Wait blocks until the slot opens if that is within
    // waitBudgetSeconds; FailFast only admits immediately. Otherwise throws
    // LlmError(Throttled).
    Admission acquire(ThrottlePolicy policy, double waitBudgetSeconds = 0.0);

    // Earliest time a request arriving at `now` would be admitted.
    double nextSlot(double now) const;

    int limit() const { return limit_; }

private:
    double nextSlotLocked(double now) const;

    int limit_;
    double window_;
    ClockFn clock_;
    Sleeper sleeper_;
    mutable std::mutex mutex_;
    std::deque<double> admitted_;
};

// One throttle per backendId.
class ThrottleRegistry {
public:
    explicit ThrottleRegistry(ClockFn clock = steadyClock(), Sleeper sleeper = realSleeper());

    // Null when the backend has no rate limit.
    SlidingWindowThrottle* forBackend(const BackendConfig& config);

private:
    ClockFn clock_;
    Sleeper sleeper_;
    std::mutex mutex_;
    std::map<std::string, std::unique_ptr<SlidingWindowThrottle>> throttles_;
};

}  // namespace chatcad::llm
