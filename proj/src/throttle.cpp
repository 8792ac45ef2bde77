#include "chatcad/throttle.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace chatcad::llm {

ClockFn steadyClock() {
    return [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
}

SlidingWindowThrottle::SlidingWindowThrottle(int limit, double windowSeconds, ClockFn clock, Sleeper sleeper)
    : limit_(limit), window_(windowSeconds), clock_(std::move(clock)), sleeper_(std::move(sleeper)) {
    if (limit_ < 1) throw DomainError(fmt::format("rate limit must be >= 1, got {}", limit_));
    if (!(window_ > 0.0)) throw DomainError("throttle window must be positive");
}

double SlidingWindowThrottle::nextSlotLocked(double now) const {
    double t = now;
    if (!admitted_.empty()) t = std::max(t, admitted_.back());
    auto n = admitted_.size();
    if (n >= static_cast<std::size_t>(limit_)) {
        // The limit-th most recent admission must leave the window first.
        double oldestInWindow = admitted_[n - static_cast<std::size_t>(limit_)];
        double free = oldestInWindow + window_;
        while (free - window_ < oldestInWindow) free = std::nextafter(free, HUGE_VAL);
        t = std::max(t, free);
    }
    return t;
}

double SlidingWindowThrottle::nextSlot(double now) const {
    std::lock_guard lock(mutex_);
    return nextSlotLocked(now);
}

Admission SlidingWindowThrottle::acquire(ThrottlePolicy policy, double waitBudgetSeconds) {
    Admission a;
    {
        std::lock_guard lock(mutex_);
        double now = clock_();
        while (!admitted_.empty() && admitted_.front() <= now - window_) admitted_.pop_front();
        double slot = nextSlotLocked(now);
        double wait = slot - now;
        if (wait > 0.0) {
            if (policy == ThrottlePolicy::FailFast) {
                throw LlmError(ErrorKind::Throttled,
                               fmt::format("rate limit of {} requests per window reached; next slot in {:.1f}s", limit_,
                                           wait),
                               wait);
            }
            if (wait > waitBudgetSeconds) {
                throw LlmError(ErrorKind::Throttled,
                               fmt::format("next slot in {:.1f}s exceeds wait budget of {:.1f}s", wait,
                                           waitBudgetSeconds),
                               wait);
            }
        }
        admitted_.push_back(slot);
        a.admittedAt = slot;
        a.waitedSeconds = std::max(0.0, wait);
    }
    if (a.waitedSeconds > 0.0) {
        sleeper_(std::chrono::milliseconds(static_cast<std::int64_t>(std::ceil(a.waitedSeconds * 1000.0))));
    }
    return a;
}

ThrottleRegistry::ThrottleRegistry(ClockFn clock, Sleeper sleeper)
    : clock_(std::move(clock)), sleeper_(std::move(sleeper)) {}

SlidingWindowThrottle* ThrottleRegistry::forBackend(const BackendConfig& config) {
    if (!config.rateLimit) return nullptr;
    std::lock_guard lock(mutex_);
    auto& slot = throttles_[config.backendId];
    if (!slot) slot = std::make_unique<SlidingWindowThrottle>(*config.rateLimit, 3600.0, clock_, sleeper_);
    return slot.get();
}

}  // namespace chatcad::llm
