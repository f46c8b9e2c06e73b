#include "hpfp/rate_limiter.hpp"

#include <algorithm>

namespace hpfp {

RateLimiter::Permit& RateLimiter::Permit::operator=(Permit&& o) noexcept {
    if (this != &o) {
        release();
        owner_ = o.owner_;
        host_ = o.host_;
        o.owner_ = nullptr;
    }
    return *this;
}

void RateLimiter::Permit::release() {
    if (owner_) owner_->release(host_);
    owner_ = nullptr;
}

RateLimiter::Permit RateLimiter::acquire(Ipv4 host) {
    std::unique_lock lock(mu_);
    for (;;) {
        Host& h = hosts_[host];
        auto now = std::chrono::steady_clock::now();
        bool slots = active_ < limits_.global && h.active < limits_.per_host;
        if (slots && now >= h.next_start) {
            ++active_;
            ++h.active;
            h.next_start = now + limits_.per_host_delay;
            peak_global_ = std::max(peak_global_, active_);
            peak_host_ = std::max(peak_host_, h.active);
            return Permit(this, host);
        }
        if (slots)
            cv_.wait_until(lock, h.next_start);
        else
            cv_.wait(lock);
    }
}

void RateLimiter::release(Ipv4 host) {
    {
        std::lock_guard lock(mu_);
        --active_;
        --hosts_[host].active;
    }
    cv_.notify_all();
}

int RateLimiter::peak_global() const {
    std::lock_guard lock(mu_);
    return peak_global_;
}

int RateLimiter::peak_per_host() const {
    std::lock_guard lock(mu_);
    return peak_host_;
}

}  // namespace hpfp
