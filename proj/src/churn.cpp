#include "hpfp/churn.hpp"

#include <algorithm>

#include "hpfp/classify_report.hpp"

namespace hpfp {

RotationProfile rotation_profile(const Verdict& v, const SignatureSet& set) {
    RotationProfile p;
    p.honeypot = v.honeypot.value_or("");
    for (const auto& o : v.stage_trace) p.signatures.insert(o.matched_signatures.begin(), o.matched_signatures.end());
    p.default_config = detect_default_config(v, set);
    return p;
}

namespace {

std::map<Instance, const Verdict*> instances(const ScanSession& s) {
    std::map<Instance, const Verdict*> out;
    for (const auto& v : s.verdicts) {
        if (!v.is_honeypot || !v.honeypot) continue;
        Instance key{v.endpoint.address, *v.honeypot};
        auto [it, fresh] = out.emplace(key, &v);
        if (!fresh && it->second->pipeline == PipelineKind::Metascan && v.pipeline == PipelineKind::Probe)
            it->second = &v;
    }
    return out;
}

}  // namespace

ChurnReport diff_sessions(const ScanSession& previous, const ScanSession& current, const SignatureSet& set,
                          Enrichment* enrichment) {
    auto prev = instances(previous);
    auto curr = instances(current);
    std::vector<Instance> fresh, lost;
    for (const auto& [k, v] : curr)
        if (!prev.count(k)) fresh.push_back(k);
    for (const auto& [k, v] : prev)
        if (!curr.count(k)) lost.push_back(k);

    ChurnReport r;
    std::set<Instance> paired;
    if (enrichment) {
        std::set<Ipv4> missing;
        auto asn = [&](Ipv4 a) -> std::optional<std::uint32_t> {
            auto e = enrichment->lookup(a);
            bool failed = std::any_of(e.errors.begin(), e.errors.end(),
                                      [](const std::string& x) { return x.rfind("whois", 0) == 0; });
            if (failed || !e.as_number) {
                missing.insert(a);
                return std::nullopt;
            }
            return e.as_number;
        };
        for (const auto& old : lost) {
            auto old_as = asn(old.address);
            if (!old_as) continue;
            auto old_profile = rotation_profile(*prev.at(old), set);
            for (const auto& cand : fresh) {
                if (paired.count(cand) || cand.honeypot != old.honeypot) continue;
                if (cand.address.same_subnet24(old.address)) continue;
                auto cand_as = asn(cand.address);
                if (!cand_as || *cand_as != *old_as) continue;
                if (rotation_profile(*curr.at(cand), set) != old_profile) continue;
                paired.insert(cand);
                paired.insert(old);
                r.rotation_inferences.push_back({old.address, cand.address, *old_as, old.honeypot});
                break;
            }
        }
        r.unenriched.assign(missing.begin(), missing.end());
    }
    for (const auto& i : fresh)
        if (!paired.count(i)) r.new_instances.push_back(i);
    for (const auto& i : lost)
        if (!paired.count(i)) r.blocked_or_offline.push_back(i);

    for (const auto& i : r.new_instances) ++r.counts[i.honeypot].new_instances;
    for (const auto& i : r.blocked_or_offline) ++r.counts[i.honeypot].blocked_or_offline;
    for (const auto& x : r.rotation_inferences) ++r.counts[x.honeypot].rotations;
    return r;
}

}  // namespace hpfp
