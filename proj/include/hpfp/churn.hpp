#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hpfp/enrichment.hpp"
#include "hpfp/records.hpp"
#include "hpfp/signature_store.hpp"

namespace hpfp {

struct Instance {
    Ipv4 address;
    HoneypotType honeypot;
    auto operator<=>(const Instance&) const = default;
};

struct Rotation {
    Ipv4 old_address;
    Ipv4 new_address;
    std::uint32_t as_number = 0;
    HoneypotType honeypot;
    auto operator<=>(const Rotation&) const = default;
};

struct ChurnCounts {
    int new_instances = 0;
    int blocked_or_offline = 0;
    int rotations = 0;
    bool operator==(const ChurnCounts&) const = default;
};

struct ChurnReport {
    std::vector<Instance> new_instances;
    std::vector<Instance> blocked_or_offline;
    std::vector<Rotation> rotation_inferences;
    std::map<HoneypotType, ChurnCounts> counts;
    // Addresses whose AS lookup failed; no rotation was inferred for them.
    std::vector<Ipv4> unenriched;

    bool empty() const { return new_instances.empty() && blocked_or_offline.empty() && rotation_inferences.empty(); }
    bool operator==(const ChurnReport&) const = default;
};

// What has to agree before two instances on different addresses count as the
// same honeypot: type, matched signature ids, default-configuration flag.
struct RotationProfile {
    HoneypotType honeypot;
    std::set<std::string> signatures;
    bool default_config = false;
    auto operator<=>(const RotationProfile&) const = default;
};
RotationProfile rotation_profile(const Verdict& v, const SignatureSet& set);

// Honeypot instances of both pipelines, keyed on (address, type). A rotation
// pairs one lost and one new instance of the same type and profile whose
// addresses share an AS but not a /24. Pairing is one to one, in address order.
// Without enrichment no rotation is inferred.
ChurnReport diff_sessions(const ScanSession& previous, const ScanSession& current, const SignatureSet& set,
                          Enrichment* enrichment);

}  // namespace hpfp
