#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hpfp/probe_engine.hpp"
#include "hpfp/signature_store.hpp"
#include "hpfp/tls.hpp"
#include "hpfp/types.hpp"

namespace hpfp {

// skipped: the stage was applicable but never ran because an earlier stage
// already failed (short-circuit mode).
enum class StageStatus { Pass, Fail, NotApplicable, Error, Skipped };

std::string_view to_string(StageStatus s);
std::optional<StageStatus> parse_stage_status(std::string_view text);

struct StageOutcome {
    Stage stage = Stage::Banner;
    StageStatus status = StageStatus::Fail;
    std::vector<TranscriptId> evidence;
    std::vector<std::string> matched_signatures;
    // Rule ids and short reasons ("no route", "ssh_malformed", ...).
    std::vector<std::string> notes;
    bool operator==(const StageOutcome&) const = default;
};

enum class PipelineKind { Probe, Metascan };
std::string_view to_string(PipelineKind k);
std::optional<PipelineKind> parse_pipeline_kind(std::string_view text);

struct CandidateTrace {
    HoneypotType honeypot;
    std::vector<StageOutcome> trace;
    bool passed = false;
    bool operator==(const CandidateTrace&) const = default;
};

struct Verdict {
    // For probe verdicts the entry endpoint of the host (first one that gave a
    // signature hit, else the first endpoint probed).
    Endpoint endpoint;
    bool is_honeypot = false;
    std::optional<HoneypotType> honeypot;
    std::vector<StageOutcome> stage_trace;
    PipelineKind pipeline = PipelineKind::Probe;
    std::string session_id;

    // Every endpoint of the host that took part.
    std::vector<Endpoint> endpoints;
    // Signature ids that opened candidate tracks.
    std::vector<std::string> entry_hits;
    // All candidate tracks in evaluation order, the reported one included.
    std::vector<CandidateTrace> candidates;
    bool research = false;
    std::optional<std::string> error;

    bool operator==(const Verdict&) const = default;
};

// Same classification and trace shape; transcript ids and session ids ignored.
bool equivalent(const Verdict& a, const Verdict& b);

enum class ErrorPolicy { AsFail, RetryOnce };

struct PipelineConfig {
    // Run every applicable stage even after a failure.
    bool full_trace = false;
    ErrorPolicy error_policy = ErrorPolicy::AsFail;
};

// True iff every status is pass or not_applicable and at least one is pass.
bool combine_stage_outcomes(std::span<const StageOutcome> trace);

// Dionaea's stock certificate.
bool certificate_check(const CertificateSummary& summary);

// Throws std::out_of_range for a honeypot type the set does not know.
bool stage_applicable(const HoneypotType& candidate, Stage stage, const SignatureSet& set);

// The probe stages in execution order.
const std::vector<Stage>& probe_stages();

// All endpoints of one address are evaluated together: a honeypot that shows
// its banner on one port and its handshake on another is still one instance.
Verdict run_probe_pipeline(std::span<const Endpoint> host, ProbeEngine& engine,
                           const PipelineConfig& config = {});
Verdict run_probe_pipeline(const Endpoint& endpoint, ProbeEngine& engine,
                           const PipelineConfig& config = {});

// Groups endpoints by address, preserving first-seen order.
std::vector<std::vector<Endpoint>> group_by_host(std::span<const Endpoint> endpoints);

}  // namespace hpfp
