#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hpfp/types.hpp"

namespace hpfp {

struct Signature {
    std::string id;
    HoneypotType honeypot;
    Protocol protocol = Protocol::SSH;
    Stage stage = Stage::Banner;
    MatchKind match_kind = MatchKind::Exact;
    std::optional<Bytes> command;
    Bytes pattern;
    std::optional<std::string> version_marker;
    bool default_config = false;

    // Marker signatures only feed version detection, never stage decisions.
    bool is_marker() const { return version_marker.has_value(); }
    bool operator==(const Signature&) const = default;
};

struct LibraryRecord {
    HoneypotType honeypot;
    Protocol protocol = Protocol::SSH;
    std::string library;
    std::string updated;
    bool operator==(const LibraryRecord&) const = default;
};

// Login used to open a shell before sending static commands.
struct SessionCredential {
    HoneypotType honeypot;
    Protocol protocol = Protocol::SSH;
    Credential credential;
    bool operator==(const SessionCredential&) const = default;
};

class SignatureError : public std::runtime_error {
public:
    enum class Kind { Parse, Validation };
    SignatureError(Kind kind, std::size_t line, const std::string& msg);
    Kind kind() const { return kind_; }
    std::size_t line() const { return line_; }

private:
    Kind kind_;
    std::size_t line_;
};

class SignatureSet {
public:
    SignatureSet() = default;

    // Validates and compiles; throws SignatureError.
    static SignatureSet build(std::vector<Signature> signatures,
                              std::map<HoneypotType, std::set<Stage>> applicability,
                              std::vector<LibraryRecord> libraries = {},
                              std::vector<SessionCredential> sessions = {});

    const std::vector<Signature>& signatures() const { return signatures_; }
    const std::map<HoneypotType, std::set<Stage>>& stage_applicability() const {
        return applicability_;
    }
    const std::vector<LibraryRecord>& libraries() const { return libraries_; }
    const std::vector<SessionCredential>& sessions() const { return sessions_; }

    const Signature* find(std::string_view id) const;
    std::optional<Credential> session_credential(const HoneypotType& h, Protocol p) const;
    // Honeypot types in first-appearance order.
    std::vector<HoneypotType> honeypots() const;

    // Stage-aware match of one signature against a subject.
    bool matches(const Signature& sig, std::string_view subject) const;

    bool operator==(const SignatureSet& o) const;
    bool empty() const { return signatures_.empty(); }

private:
    friend class SignatureSetBuilder;
    std::vector<Signature> signatures_;
    std::vector<std::shared_ptr<const std::regex>> regexes_;  // parallel to signatures_
    std::map<HoneypotType, std::set<Stage>> applicability_;
    std::vector<LibraryRecord> libraries_;
    std::vector<SessionCredential> sessions_;
};

struct SignatureHit {
    HoneypotType honeypot;
    const Signature* signature = nullptr;
};

SignatureSet load_signatures(std::string_view source);
// Also resolves `@include <file>` relative to the including file.
SignatureSet load_signature_file(const std::filesystem::path& path);
std::string serialize_signatures(const SignatureSet& set);
std::filesystem::path default_signature_path();

std::vector<SignatureHit> match_banner(std::string_view banner, Protocol protocol,
                                       const SignatureSet& set);
std::vector<SignatureHit> match_http_body(std::string_view response, const SignatureSet& set);

// Generic stage lookup. When `honeypot` is given only its signatures are tried.
std::vector<SignatureHit> match_stage(Stage stage, Protocol protocol, std::string_view subject,
                                      const SignatureSet& set,
                                      const HoneypotType* honeypot = nullptr);

struct StaticMatch {
    enum class Status { Matched, NotMatched, NoSignature };
    Status status = Status::NoSignature;
    const Signature* signature = nullptr;
    bool matched() const { return status == Status::Matched; }
};

StaticMatch match_static_command(const HoneypotType& honeypot, std::string_view command,
                                 std::string_view response, const SignatureSet& set);

// The subject forms a stage compares against (exposed for tests).
std::vector<std::string> subject_forms(Stage stage, std::string_view subject);

}  // namespace hpfp
