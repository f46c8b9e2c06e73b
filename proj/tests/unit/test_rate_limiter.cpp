#include <gtest/gtest.h>

#include <atomic>
#include <thread>
#include <vector>

#include "hpfp/rate_limiter.hpp"

using namespace hpfp;
using namespace std::chrono_literals;

TEST(RateLimiter, ConcurrencyNeverExceedsLimits) {
    RateLimiter lim({6, 2, 0ms});
    std::atomic<int> global{0}, worst_global{0};
    std::atomic<int> per[4] = {0, 0, 0, 0};
    std::atomic<int> worst_host{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 48; ++i) {
        threads.emplace_back([&, i] {
            int h = i % 4;
            auto permit = lim.acquire(Ipv4(0x7f000001u + h));
            int g = ++global;
            int p = ++per[h];
            worst_global = std::max(worst_global.load(), g);
            worst_host = std::max(worst_host.load(), p);
            std::this_thread::sleep_for(2ms);
            --per[h];
            --global;
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(worst_global.load(), 6);
    EXPECT_LE(worst_host.load(), 2);
    EXPECT_LE(lim.peak_global(), 6);
    EXPECT_LE(lim.peak_per_host(), 2);
}

TEST(RateLimiter, SpacesStartsOnOneHost) {
    RateLimiter lim({512, 2, 50ms});
    Ipv4 host(0x7f000001u);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 4; ++i) lim.acquire(host);
    auto elapsed = std::chrono::steady_clock::now() - t0;
    EXPECT_GE(elapsed, 150ms);
}

TEST(RateLimiter, OtherHostsAreNotDelayed) {
    RateLimiter lim({512, 2, 500ms});
    auto t0 = std::chrono::steady_clock::now();
    for (std::uint32_t i = 0; i < 10; ++i) lim.acquire(Ipv4(0x7f000001u + i));
    EXPECT_LT(std::chrono::steady_clock::now() - t0, 200ms);
}
