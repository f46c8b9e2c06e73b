#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>

#include "hpfp/types.hpp"

namespace hpfp {

struct RateLimits {
    int global = 512;        // concurrent sockets overall
    int per_host = 2;        // concurrent sockets per address
    std::chrono::milliseconds per_host_delay{100};  // gap between connection starts on one address
};

// Shared by all probe workers. acquire() blocks until a slot is free and the
// per-host spacing has elapsed.
class RateLimiter {
public:
    explicit RateLimiter(RateLimits limits = {}) : limits_(limits) {}

    class Permit {
    public:
        Permit() = default;
        Permit(RateLimiter* owner, Ipv4 host) : owner_(owner), host_(host) {}
        Permit(Permit&& o) noexcept : owner_(o.owner_), host_(o.host_) { o.owner_ = nullptr; }
        Permit& operator=(Permit&& o) noexcept;
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;
        ~Permit() { release(); }
        void release();

    private:
        RateLimiter* owner_ = nullptr;
        Ipv4 host_;
    };

    Permit acquire(Ipv4 host);

    const RateLimits& limits() const { return limits_; }
    int peak_global() const;
    int peak_per_host() const;

private:
    void release(Ipv4 host);

    struct Host {
        int active = 0;
        std::chrono::steady_clock::time_point next_start{};
    };

    RateLimits limits_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<Ipv4, Host> hosts_;
    int active_ = 0;
    int peak_global_ = 0;
    int peak_host_ = 0;
};

}  // namespace hpfp
