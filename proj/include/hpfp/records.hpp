#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hpfp/metascan.hpp"
#include "hpfp/probe_engine.hpp"
#include "hpfp/probe_pipeline.hpp"

namespace hpfp {

struct ScanSession {
    std::string session_id;
    std::int64_t started_ms = 0;
    std::int64_t finished_ms = 0;
    // Target and exclusion entries as given (CIDR or @file).
    std::vector<std::string> targets;
    std::vector<std::string> exclusions;
    std::vector<std::uint16_t> ports;
    // Source address label of the scanner ("default" when unbound).
    std::string scanner_identity = "default";
    bool credential_probe = false;
    std::string credential_scope;
    std::string metascan = "off";
    bool metascan_incomplete = false;
    std::vector<Verdict> verdicts;
    std::vector<ProbeTranscript> transcripts;
    std::vector<HoneyscoreRecord> honeyscores;
    std::vector<std::string> warnings;

    const ProbeTranscript* transcript(TranscriptId id) const;
    bool operator==(const ScanSession&) const = default;
};

// Honeypot verdict counts per type, probe and metascan kept apart.
struct SessionSummary {
    std::map<HoneypotType, int> probe;
    std::map<HoneypotType, int> metascan;
    int endpoints = 0;
    int hosts = 0;
    int negatives = 0;
    int errors = 0;
};
SessionSummary summarize(const ScanSession& s);

nlohmann::json to_json(const Endpoint& e);
Endpoint endpoint_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StageOutcome& o);
StageOutcome stage_outcome_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProbeTranscript& t);
ProbeTranscript transcript_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HoneyscoreRecord& h);
HoneyscoreRecord honeyscore_from_json(const nlohmann::json& j);

// Session fields without the record lists.
nlohmann::json session_header(const ScanSession& s);
ScanSession session_from_header(const nlohmann::json& j);

// Line-delimited JSON helpers.
std::string to_lines(const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> parse_lines(std::string_view text);

}  // namespace hpfp
