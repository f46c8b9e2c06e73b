#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hpfp/churn.hpp"
#include "hpfp/enrichment.hpp"
#include "hpfp/records.hpp"
#include "hpfp/signature_store.hpp"

namespace hpfp {

// ---- versions and configuration

struct VersionResult {
    std::optional<std::string> version;
    // More than one entry: conflicting markers, no version chosen.
    std::vector<std::string> candidates;
    std::vector<std::string> markers;  // matched marker ids
    bool ambiguous() const { return candidates.size() > 1; }
    bool operator==(const VersionResult&) const = default;
};

// Marker signatures of the verdict's honeypot type against the transcripts
// cited as evidence in its stage trace.
VersionResult detect_version(const Verdict& v, const std::vector<ProbeTranscript>& transcripts,
                             const SignatureSet& set);

// True iff no http_body or static_command stage of the trace failed and every
// signature those stages matched carries the default flag.
bool detect_default_config(const Verdict& v, const SignatureSet& set);

// ---- side findings

enum class FindingKind { DefaultPassword, VulnerableBanner };
std::string_view to_string(FindingKind k);

struct SideFinding {
    Ipv4 address;
    std::uint16_t port = 0;
    FindingKind kind = FindingKind::VulnerableBanner;
    std::string detail;  // matched banner, or "user/password"
    Protocol protocol = Protocol::SSH;
    std::vector<std::string> cve_refs;
    bool operator==(const SideFinding&) const = default;
};

struct VulnerableBanner {
    std::string banner;  // prefix of the first banner line
    std::vector<std::string> cve_refs;
};

// "banner | CVE-a, CVE-b" per line, escapes as in signature files.
std::vector<VulnerableBanner> load_vulnerable_banners(const std::filesystem::path& file);
std::filesystem::path default_vulnerable_banners_path();

// Only endpoints whose verdict is negative are considered, and default
// passwords only when the session ran with credential probing enabled.
std::vector<SideFinding> flag_vulnerable_nonhoneypot(const ScanSession& s,
                                                     const std::vector<VulnerableBanner>& banners);

// ---- ground truth

struct DomainListStats {
    std::string list;
    std::size_t domains = 0;
    std::size_t resolved = 0;
    std::size_t unresolved = 0;
    std::size_t addresses = 0;
};

struct Collision {
    std::string list;
    std::string domain;
    Ipv4 address;
};

struct GroundTruthReport {
    std::vector<DomainListStats> lists;
    std::vector<Collision> intersection;
    std::vector<std::string> warnings;
    bool passed() const { return intersection.empty(); }
};

// Lines are "domain" or "rank,domain" (Alexa/Tranco CSV); '#' starts a comment.
std::vector<std::string> parse_domain_list(std::string_view text);
GroundTruthReport validate_ground_truth(const ScanSession& s, const std::vector<std::filesystem::path>& lists,
                                        Resolver& resolver);

// ---- honeyscore comparison

// Buckets in order 0, 0.3, 0.5, 0.8, 1, NA.
using ScoreHistogram = std::array<int, 6>;
std::size_t honeyscore_bucket(const std::optional<double>& score);
// "0:2, 0.3:0, 0.5:0, 0.8:1, 1:0, NA:0"
std::string histogram_row(const ScoreHistogram& h);
// Per honeypot type, over honeypot verdicts whose address has a score record.
std::map<HoneypotType, ScoreHistogram> honeyscore_histogram(const ScanSession& s);

// ---- report

struct Annotation {
    std::size_t verdict = 0;  // index into the session's verdicts
    Endpoint endpoint;
    HoneypotType honeypot;
    PipelineKind pipeline = PipelineKind::Probe;
    VersionResult version;
    bool default_config = false;
    bool research = false;
    std::optional<HoneyscoreRecord> honeyscore;
};

// One annotation per honeypot verdict.
std::vector<Annotation> annotate(const ScanSession& s, const SignatureSet& set);

enum class ReportFormat { Lines, Table, Summary };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
ReportFormat parse_report_format(std::string_view text);

struct ReportInput {
    const ScanSession* session = nullptr;
    std::vector<Annotation> annotations;
    std::vector<SideFinding> findings;
    std::optional<ChurnReport> churn;
};

std::string export_report(const ReportInput& in, ReportFormat format);

}  // namespace hpfp
