#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "chatcad/throttle.hpp"

using namespace chatcad;
using namespace chatcad::llm;

namespace {

// Manual clock; sleeping advances it.
struct FakeTime {
    double now = 0.0;
    ClockFn clock() {
        return [this] { return now; };
    }
    Sleeper sleeper() {
        return [this](std::chrono::milliseconds d) { now += static_cast<double>(d.count()) / 1000.0; };
    }
};

int countInWindow(const std::vector<double>& admitted, double t, double window) {
    int n = 0;
    for (double a : admitted) {
        if (a > t - window && a <= t) ++n;
    }
    return n;
}

}  // namespace

TEST(Throttle, TwentyFirstWaitsAnHour) {
    FakeTime ft;
    SlidingWindowThrottle th(20, 3600.0, ft.clock(), ft.sleeper());
    for (int i = 0; i < 20; ++i) EXPECT_EQ(th.acquire(ThrottlePolicy::Wait, 1e9).waitedSeconds, 0.0);
    EXPECT_EQ(th.nextSlot(0.0), 3600.0);
    auto a = th.acquire(ThrottlePolicy::Wait, 1e9);
    EXPECT_EQ(a.admittedAt, 3600.0);
    EXPECT_EQ(a.waitedSeconds, 3600.0);
    EXPECT_DOUBLE_EQ(ft.now, 3600.0);
}

TEST(Throttle, SpacedRequestsNeverWait) {
    FakeTime ft;
    SlidingWindowThrottle th(20, 3600.0, ft.clock(), ft.sleeper());
    for (int i = 0; i < 100; ++i) {
        ft.now = i * 180.0;
        EXPECT_EQ(th.acquire(ThrottlePolicy::FailFast).waitedSeconds, 0.0) << i;
    }
}

TEST(Throttle, FailFastAndBudget) {
    FakeTime ft;
    SlidingWindowThrottle th(2, 3600.0, ft.clock(), ft.sleeper());
    th.acquire(ThrottlePolicy::FailFast);
    th.acquire(ThrottlePolicy::FailFast);
    try {
        th.acquire(ThrottlePolicy::FailFast);
        FAIL();
    } catch (const LlmError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Throttled);
        EXPECT_EQ(e.retryAfterSeconds().value(), 3600.0);
    }
    EXPECT_THROW(th.acquire(ThrottlePolicy::Wait, 60.0), LlmError);
    EXPECT_EQ(ft.now, 0.0);
    EXPECT_EQ(th.acquire(ThrottlePolicy::Wait, 3600.0).admittedAt, 3600.0);
}

TEST(Throttle, RejectsBadLimit) { EXPECT_THROW(SlidingWindowThrottle(0), DomainError); }

TEST(Throttle, FuzzedArrivalsRespectWindow) {
    std::mt19937_64 rng(2024);
    for (int round = 0; round < 50; ++round) {
        FakeTime ft;
        std::uniform_int_distribution<int> lim(1, 25);
        int limit = lim(rng);
        double window = 3600.0;
        SlidingWindowThrottle th(limit, window, ft.clock(), ft.sleeper());
        std::exponential_distribution<double> gap(1.0 / 90.0);
        std::bernoulli_distribution burst(0.3);
        std::vector<double> admitted;
        for (int i = 0; i < 300; ++i) {
            if (!burst(rng)) ft.now += gap(rng);
            double arrival = ft.now;
            auto a = th.acquire(ThrottlePolicy::Wait, 1e12);
            EXPECT_GE(a.admittedAt, arrival);
            if (!admitted.empty()) EXPECT_GE(a.admittedAt, admitted.back());
            // A wait is only justified by a full window just before the slot.
            if (a.waitedSeconds > 0.0) {
                double justBefore = std::nextafter(a.admittedAt, 0.0);
                EXPECT_TRUE(countInWindow(admitted, justBefore, window) >= limit ||
                            (!admitted.empty() && admitted.back() == a.admittedAt));
            }
            admitted.push_back(a.admittedAt);
        }
        for (double t : admitted) EXPECT_LE(countInWindow(admitted, t, window), limit);
    }
}

TEST(Throttle, ConcurrentAcquireStaysWithinLimit) {
    std::mutex m;
    double now = 0.0;
    auto clock = [&] {
        std::lock_guard g(m);
        return now;
    };
    SlidingWindowThrottle th(5, 3600.0, clock, [](auto) {});
    std::vector<double> slots;
    std::mutex sm;
    std::vector<std::thread> ts;
    for (int i = 0; i < 8; ++i) {
        ts.emplace_back([&] {
            for (int k = 0; k < 5; ++k) {
                auto a = th.acquire(ThrottlePolicy::Wait, 1e9);
                std::lock_guard g(sm);
                slots.push_back(a.admittedAt);
            }
        });
    }
    for (auto& t : ts) t.join();
    std::sort(slots.begin(), slots.end());
    ASSERT_EQ(slots.size(), 40u);
    for (double t : slots) EXPECT_LE(countInWindow(slots, t, 3600.0), 5);
    EXPECT_EQ(slots.back(), 7 * 3600.0);
}

TEST(Registry, OnePerBackend) {
    ThrottleRegistry reg;
    BackendConfig a;
    a.backendId = "a";
    a.kind = "mock";
    EXPECT_EQ(reg.forBackend(a), nullptr);
    a.rateLimit = 20;
    auto* t1 = reg.forBackend(a);
    ASSERT_NE(t1, nullptr);
    EXPECT_EQ(t1->limit(), 20);
    EXPECT_EQ(reg.forBackend(a), t1);
    BackendConfig b = a;
    b.backendId = "b";
    EXPECT_NE(reg.forBackend(b), t1);
}
