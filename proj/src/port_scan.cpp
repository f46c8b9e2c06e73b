#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "hpfp/probe_engine.hpp"

namespace hpfp {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    workers = std::clamp<std::size_t>(workers, 1, n);
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
}

PortScanResult port_scan(const std::vector<Ipv4>& targets, const std::vector<std::uint16_t>& ports,
                         RateLimiter& limiter, const PortScanOptions& opts) {
    PortScanResult out;
    std::vector<Endpoint> work;
    for (auto addr : targets) {
        for (auto port : ports) {
            auto it = opts.overrides.find(port);
            auto proto = it != opts.overrides.end() ? std::optional(it->second) : protocol_for_port(port);
            if (!proto) {
                out.errors.push_back({addr, port, "unknown_protocol"});
                continue;
            }
            work.push_back({addr, port, *proto});
        }
    }
    std::mutex mu;
    parallel_for(work.size(), opts.workers, [&](std::size_t i) {
        const auto& ep = work[i];
        auto permit = limiter.acquire(ep.address);
        auto c = net::connect_tcp(ep.address, ep.port, opts.connect_timeout, opts.source);
        c.conn = net::Conn();
        permit.release();
        std::lock_guard lock(mu);
        if (c.ok()) out.endpoints.push_back(ep);
        else out.errors.push_back({ep.address, ep.port, c.error});
    });
    std::sort(out.endpoints.begin(), out.endpoints.end());
    std::sort(out.errors.begin(), out.errors.end(), [](const auto& a, const auto& b) {
        return std::tie(a.address, a.port) < std::tie(b.address, b.port);
    });
    return out;
}

}  // namespace hpfp
