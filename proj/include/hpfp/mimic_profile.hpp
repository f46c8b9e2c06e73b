#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hpfp/types.hpp"

namespace hpfp::mimic {

enum class ProfileKind { Honeypot, Genuine, Stub };
// line: input split on '\n'; raw: each received chunk is one unit.
enum class Engine { Line, Raw, Http, Ssh, S7 };
enum class Action { Send, SendClose, Close, Reset, Silent };

struct Rule {
    std::optional<Stage> stage;  // mutations drop rules tagged with their stage
    bool any = false;
    MatchKind kind = MatchKind::Exact;
    Bytes pattern;
    Action action = Action::Send;
    Bytes payload;
    std::shared_ptr<const std::regex> re;

    bool matches(std::string_view unit) const;
};

class ProfileError : public std::runtime_error {
public:
    ProfileError(const std::string& where, const std::string& msg)
        : std::runtime_error(where + ": " + msg) {}
};

struct Listener {
    std::string name;
    std::uint16_t port = 0;
    Protocol protocol = Protocol::SSH;
    Engine engine = Engine::Line;
    // Key/value settings with escapes intact and ${vars} expanded.
    std::vector<std::pair<std::string, std::string>> settings;

    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    // Unescaped value.
    std::optional<Bytes> bytes(const std::string& key) const;
    std::vector<std::string> all(const std::string& key) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    std::vector<Rule> rules() const;
    Rule fallback() const;
};

struct MimicProfile {
    std::string name;
    std::string base;  // profile the variant or mutation derives from
    ProfileKind kind = ProfileKind::Honeypot;
    std::optional<HoneypotType> honeypot;
    std::optional<std::string> version;
    bool default_config = true;
    bool is_variant = false;
    std::vector<Listener> listeners;
    std::vector<Ipv4> ban;
    std::optional<Stage> mutated_stage;
    // Stages a mutation cannot avoid breaking because they read the same exchange.
    std::set<Stage> coupled_stages;

    const Listener* listener(const std::string& name) const;
};

// Raw parsed form of one .profile file, kept so variants and mutations can be
// derived on demand.
struct ProfileSource {
    using Entries = std::vector<std::pair<std::string, std::string>>;
    std::string file;
    Entries profile;
    std::vector<std::pair<std::string, Entries>> listeners;
    std::vector<std::pair<std::string, Entries>> variants;
    std::vector<std::pair<Stage, Entries>> mutations;
};

ProfileSource parse_profile_source(std::string_view text, const std::string& file = "<memory>");

class ProfileLibrary {
public:
    static ProfileLibrary load_dir(const std::filesystem::path& dir);
    void add(ProfileSource src);

    // Base profiles followed by their variants, in file-name order.
    const std::vector<MimicProfile>& profiles() const { return profiles_; }
    const MimicProfile* find(std::string_view name) const;
    const MimicProfile& at(std::string_view name) const;

    std::vector<MimicProfile> select(ProfileKind kind, bool include_variants = false) const;
    // Stages for which the base profile declares a mutation.
    std::vector<Stage> mutation_stages(std::string_view base) const;
    MimicProfile mutate(std::string_view base, Stage stage) const;

private:
    std::vector<ProfileSource> sources_;
    std::vector<MimicProfile> profiles_;
};

std::filesystem::path default_profile_dir();
std::string_view to_string(ProfileKind k);

}  // namespace hpfp::mimic
