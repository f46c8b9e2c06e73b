#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hpfp/types.hpp"

namespace hpfp {

struct Cidr {
    Ipv4 base;  // network address (host bits cleared)
    int prefix = 32;

    // "a.b.c.d" or "a.b.c.d/n". Host bits set in the address are rejected.
    static std::optional<Cidr> parse(std::string_view text);
    std::uint32_t first() const { return base.value(); }
    std::uint32_t last() const;
    std::uint64_t size() const { return std::uint64_t(1) << (32 - prefix); }
    bool contains(Ipv4 a) const { return a.value() >= first() && a.value() <= last(); }
    std::string str() const;
    bool operator==(const Cidr&) const = default;
};

class TargetError : public std::runtime_error {
public:
    TargetError(const std::string& where, const std::string& msg)
        : std::runtime_error(where + ": " + msg), where_(where) {}
    const std::string& where() const { return where_; }

private:
    std::string where_;
};

// Inclusive address ranges, sorted and disjoint.
class AddressSet {
public:
    void add(std::uint32_t lo, std::uint32_t hi);
    void add(const Cidr& c) { add(c.first(), c.last()); }
    void subtract(const AddressSet& other);

    bool contains(Ipv4 a) const;
    std::uint64_t size() const;
    bool empty() const { return ranges_.empty(); }
    std::vector<Ipv4> expand() const;
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& ranges() const { return ranges_; }
    bool operator==(const AddressSet&) const = default;

private:
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges_;
};

// Targets and exclusions as given by the operator. Each entry is either a
// CIDR/address or "@path" naming a file with one entry per line (# comments).
struct TargetSpec {
    std::vector<std::string> targets;
    std::vector<std::string> exclusions;
};

struct TargetSet {
    AddressSet addresses;
    AddressSet excluded;
    std::vector<std::string> warnings;
};

inline constexpr std::uint64_t kLargeTargetWarning = std::uint64_t(1) << 24;

// Parse errors carry "file:line" or "arg N" locations.
TargetSet ingest_targets(const TargetSpec& spec, std::uint64_t warn_at = kLargeTargetWarning);

// Comma- or whitespace-separated list, "a,b c" style, as used on the command line.
std::vector<std::string> split_list(std::string_view text);

// "22,80,8000-8010" into a sorted unique list.
std::vector<std::uint16_t> parse_ports(std::string_view text);

}  // namespace hpfp
