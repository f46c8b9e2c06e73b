#include "hpfp/targets.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include "hpfp/bytes.hpp"

namespace hpfp {

std::optional<Cidr> Cidr::parse(std::string_view text) {
    auto slash = text.find('/');
    auto addr = Ipv4::parse(text.substr(0, slash));
    if (!addr) return std::nullopt;
    int prefix = 32;
    if (slash != std::string_view::npos) {
        auto p = text.substr(slash + 1);
        auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), prefix);
        if (ec != std::errc() || ptr != p.data() + p.size() || p.empty() || prefix < 0 || prefix > 32)
            return std::nullopt;
    }
    std::uint32_t mask = prefix == 0 ? 0 : ~std::uint32_t(0) << (32 - prefix);
    if ((addr->value() & ~mask) != 0) return std::nullopt;
    return Cidr{*addr, prefix};
}

std::uint32_t Cidr::last() const {
    std::uint32_t host = prefix == 0 ? ~std::uint32_t(0) : (std::uint32_t(1) << (32 - prefix)) - 1;
    return first() | host;
}

std::string Cidr::str() const { return base.str() + "/" + std::to_string(prefix); }

void AddressSet::add(std::uint32_t lo, std::uint32_t hi) {
    if (lo > hi) return;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    std::uint64_t nlo = lo, nhi = hi;
    bool placed = false;
    for (const auto& [a, b] : ranges_) {
        if (std::uint64_t(b) + 1 < nlo) {
            out.emplace_back(a, b);
        } else if (std::uint64_t(a) > nhi + 1) {
            if (!placed) {
                out.emplace_back(std::uint32_t(nlo), std::uint32_t(nhi));
                placed = true;
            }
            out.emplace_back(a, b);
        } else {
            nlo = std::min<std::uint64_t>(nlo, a);
            nhi = std::max<std::uint64_t>(nhi, b);
        }
    }
    if (!placed) out.emplace_back(std::uint32_t(nlo), std::uint32_t(nhi));
    ranges_ = std::move(out);
}

void AddressSet::subtract(const AddressSet& other) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (auto [a, b] : ranges_) {
        std::uint64_t lo = a;
        for (const auto& [x, y] : other.ranges_) {
            if (y < lo || x > b) continue;
            if (x > lo) out.emplace_back(std::uint32_t(lo), x - 1);
            lo = std::uint64_t(y) + 1;
            if (lo > b) break;
        }
        if (lo <= b) out.emplace_back(std::uint32_t(lo), b);
    }
    ranges_ = std::move(out);
}

bool AddressSet::contains(Ipv4 a) const {
    auto v = a.value();
    auto it = std::upper_bound(ranges_.begin(), ranges_.end(), v,
                               [](std::uint32_t x, const auto& r) { return x < r.first; });
    if (it == ranges_.begin()) return false;
    --it;
    return v <= it->second;
}

std::uint64_t AddressSet::size() const {
    std::uint64_t n = 0;
    for (const auto& [a, b] : ranges_) n += std::uint64_t(b) - a + 1;
    return n;
}

std::vector<Ipv4> AddressSet::expand() const {
    std::vector<Ipv4> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (const auto& [a, b] : ranges_)
        for (std::uint64_t v = a; v <= b; ++v) out.emplace_back(static_cast<std::uint32_t>(v));
    return out;
}

std::vector<std::string> split_list(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::uint16_t> parse_ports(std::string_view text) {
    std::set<std::uint16_t> ports;
    auto num = [&](std::string_view s) {
        int v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || v < 1 || v > 65535)
            throw TargetError("ports", "bad port '" + std::string(s) + "'");
        return static_cast<std::uint16_t>(v);
    };
    for (const auto& item : split_list(text)) {
        auto dash = item.find('-');
        if (dash == std::string::npos) {
            ports.insert(num(item));
            continue;
        }
        auto lo = num(std::string_view(item).substr(0, dash));
        auto hi = num(std::string_view(item).substr(dash + 1));
        if (lo > hi) throw TargetError("ports", "empty range '" + item + "'");
        for (int p = lo; p <= hi; ++p) ports.insert(static_cast<std::uint16_t>(p));
    }
    return {ports.begin(), ports.end()};
}

namespace {

void add_entry(AddressSet& set, std::string_view entry, const std::string& where) {
    auto c = Cidr::parse(entry);
    if (!c) throw TargetError(where, "not an address or CIDR block: '" + std::string(entry) + "'");
    set.add(*c);
}

void add_all(AddressSet& set, const std::vector<std::string>& entries, const char* kind) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.empty() || e[0] != '@') {
            add_entry(set, e, std::string(kind) + " " + std::to_string(i + 1));
            continue;
        }
        std::filesystem::path path = e.substr(1);
        std::ifstream in(path);
        if (!in) throw TargetError(path.string(), "cannot open");
        std::string line;
        for (std::size_t n = 1; std::getline(in, line); ++n) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            for (const auto& item : split_list(line)) add_entry(set, item, path.string() + ":" + std::to_string(n));
        }
    }
}

}  // namespace

TargetSet ingest_targets(const TargetSpec& spec, std::uint64_t warn_at) {
    if (spec.targets.empty())
        throw TargetError("targets", "no targets given; there is no default target range");
    TargetSet t;
    add_all(t.addresses, spec.targets, "target");
    add_all(t.excluded, spec.exclusions, "exclusion");
    auto before = t.addresses.size();
    t.addresses.subtract(t.excluded);
    if (before > 0 && t.addresses.empty())
        t.warnings.push_back("exclusions remove every target; nothing to scan");
    if (t.addresses.size() >= warn_at)
        t.warnings.push_back("large target set: " + std::to_string(t.addresses.size()) + " addresses");
    return t;
}

}  // namespace hpfp
