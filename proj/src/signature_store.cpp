#include "hpfp/signature_store.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <tuple>

#include "hpfp/bytes.hpp"

namespace hpfp {

SignatureError::SignatureError(Kind kind, std::size_t line, const std::string& msg)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg),
      kind_(kind),
      line_(line) {}

namespace {

using Kind = SignatureError::Kind;

struct Parts {
    std::vector<Signature> signatures;
    std::vector<std::string> origins;  // "file:line" per signature, for messages
    std::vector<std::size_t> lines;
    std::map<HoneypotType, std::set<Stage>> applicability;
    std::vector<LibraryRecord> libraries;
    std::vector<SessionCredential> sessions;
};

std::string origin_of(const Parts& p, std::size_t i) {
    return i < p.origins.size() ? p.origins[i] : "#" + std::to_string(i + 1);
}

Protocol need_protocol(std::string_view text, std::size_t line) {
    auto p = parse_protocol(text);
    if (!p) throw SignatureError(Kind::Parse, line, "unknown protocol '" + std::string(text) + "'");
    return *p;
}

Stage need_stage(std::string_view text, std::size_t line) {
    auto s = parse_stage(text);
    if (!s || !is_signature_stage(*s))
        throw SignatureError(Kind::Parse, line, "unknown stage '" + std::string(text) + "'");
    return *s;
}

bool parse_flag(std::string_view text, std::size_t line) {
    if (text.empty() || text == "false" || text == "no") return false;
    if (text == "true" || text == "yes" || text == "default") return true;
    throw SignatureError(Kind::Parse, line, "bad default_config flag '" + std::string(text) + "'");
}

Bytes unescape_at(std::string_view text, std::size_t line) {
    try {
        return unescape(text);
    } catch (const EscapeError& e) {
        throw SignatureError(Kind::Parse, line, e.what());
    }
}

class Parser {
public:
    explicit Parser(Parts& parts) : parts_(parts) {}

    void parse(std::string_view source, const std::string& name,
               const std::filesystem::path* base_dir, int depth) {
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= source.size()) {
            auto nl = source.find('\n', pos);
            auto raw = source.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                     : nl - pos);
            ++line_no;
            pos = nl == std::string_view::npos ? source.size() + 1 : nl + 1;
            auto line = trim(raw);
            if (line.empty() || line.front() == '#') continue;
            try {
                if (line.front() == '@')
                    directive(line, line_no, base_dir, depth);
                else
                    record(line, line_no, name);
            } catch (const SignatureError& e) {
                if (name.empty() || e.line() == 0) throw;
                throw SignatureError(e.kind(), e.line(), name + ": " + strip_line(e.what()));
            }
        }
    }

private:
    static std::string strip_line(const std::string& msg) {
        auto colon = msg.find(": ");
        return colon == std::string::npos ? msg : msg.substr(colon + 2);
    }

    void directive(std::string_view line, std::size_t line_no,
                   const std::filesystem::path* base_dir, int depth) {
        auto sp = line.find_first_of(" \t");
        auto word = line.substr(0, sp);
        auto rest = sp == std::string_view::npos ? std::string_view{} : trim(line.substr(sp));
        auto fields = split_fields(rest);
        if (word == "@applies") {
            if (fields.size() != 2)
                throw SignatureError(Kind::Parse, line_no, "@applies needs <honeypot> | <stages>");
            auto& stages = parts_.applicability[fields[0]];
            std::string list = fields[1];
            std::replace(list.begin(), list.end(), ',', ' ');
            std::istringstream in(list);
            for (std::string s; in >> s;) stages.insert(need_stage(s, line_no));
        } else if (word == "@library") {
            if (fields.size() != 4)
                throw SignatureError(Kind::Parse, line_no,
                                     "@library needs <honeypot> | <protocol> | <library> | <updated>");
            parts_.libraries.push_back(
                {fields[0], need_protocol(fields[1], line_no), fields[2], fields[3]});
        } else if (word == "@session") {
            if (fields.size() != 4)
                throw SignatureError(Kind::Parse, line_no,
                                     "@session needs <honeypot> | <protocol> | <user> | <password>");
            parts_.sessions.push_back({fields[0], need_protocol(fields[1], line_no),
                                       {unescape_at(fields[2], line_no),
                                        unescape_at(fields[3], line_no)}});
        } else if (word == "@include") {
            if (!base_dir)
                throw SignatureError(Kind::Parse, line_no, "@include needs a file context");
            if (depth > 8) throw SignatureError(Kind::Parse, line_no, "@include nested too deeply");
            auto path = *base_dir / std::string(rest);
            std::ifstream in(path, std::ios::binary);
            if (!in) throw SignatureError(Kind::Parse, line_no, "cannot open " + path.string());
            std::stringstream ss;
            ss << in.rdbuf();
            auto dir = path.parent_path();
            parse(ss.str(), path.filename().string(), &dir, depth + 1);
        } else {
            throw SignatureError(Kind::Parse, line_no, "unknown directive " + std::string(word));
        }
    }

    void record(std::string_view line, std::size_t line_no, const std::string& name) {
        auto f = split_fields(line);
        if (f.size() < 7 || f.size() > 9)
            throw SignatureError(Kind::Parse, line_no,
                                 "expected 7 to 9 fields, found " + std::to_string(f.size()));
        f.resize(9);
        Signature s;
        s.id = f[0];
        if (s.id.empty()) throw SignatureError(Kind::Parse, line_no, "empty id");
        s.honeypot = f[1];
        if (s.honeypot.empty()) throw SignatureError(Kind::Parse, line_no, "empty honeypot");
        s.protocol = need_protocol(f[2], line_no);
        s.stage = need_stage(f[3], line_no);
        auto kind = parse_match_kind(f[4]);
        if (!kind)
            throw SignatureError(Kind::Parse, line_no, "unknown match kind '" + f[4] + "'");
        s.match_kind = *kind;
        if (!f[5].empty()) s.command = unescape_at(f[5], line_no);
        s.pattern = unescape_at(f[6], line_no);
        if (!f[7].empty()) s.version_marker = f[7];
        s.default_config = parse_flag(f[8], line_no);
        parts_.signatures.push_back(std::move(s));
        parts_.origins.push_back((name.empty() ? "line " : name + ":") + std::to_string(line_no));
        parts_.lines.push_back(line_no);
    }

    Parts& parts_;
};

std::shared_ptr<const std::regex> compile(const Signature& s, std::size_t line,
                                          const std::string& origin) {
    try {
        auto re = std::make_shared<const std::regex>(s.pattern, std::regex::ECMAScript);
        if (std::regex_search(std::string(), *re))
            throw SignatureError(Kind::Validation, line,
                                 "regex of '" + s.id + "' (" + origin + ") matches empty input");
        return re;
    } catch (const std::regex_error& e) {
        throw SignatureError(Kind::Validation, line,
                             "bad regex in '" + s.id + "' (" + origin + "): " + e.what());
    }
}

SignatureSet build_from(Parts parts);

}  // namespace

class SignatureSetBuilder {
public:
    static SignatureSet make(Parts parts) {
        SignatureSet set;
        std::map<std::string, std::size_t> ids;
        std::map<std::tuple<HoneypotType, Stage, Bytes, std::optional<Bytes>>, std::size_t> keys;
        for (std::size_t i = 0; i < parts.signatures.size(); ++i) {
            const auto& s = parts.signatures[i];
            std::size_t line = i < parts.lines.size() ? parts.lines[i] : 0;
            if (auto [it, fresh] = ids.emplace(s.id, i); !fresh)
                throw SignatureError(Kind::Validation, line,
                                     "duplicate id '" + s.id + "' (" + origin_of(parts, it->second) +
                                         " and " + origin_of(parts, i) + ")");
            if (s.pattern.empty())
                throw SignatureError(Kind::Validation, line, "empty pattern in '" + s.id + "'");
            if ((s.stage == Stage::Handshake || s.stage == Stage::StaticCommand) &&
                (!s.command || s.command->empty()))
                throw SignatureError(Kind::Validation, line,
                                     "'" + s.id + "' needs a command for stage " +
                                         std::string(to_string(s.stage)));
            auto key = std::make_tuple(s.honeypot, s.stage, s.pattern, s.command);
            if (auto [it, fresh] = keys.emplace(key, i); !fresh) {
                const auto& other = parts.signatures[it->second];
                throw SignatureError(Kind::Validation, line,
                                     "'" + other.id + "' (" + origin_of(parts, it->second) +
                                         ") and '" + s.id + "' (" + origin_of(parts, i) +
                                         ") share honeypot, stage, pattern and command");
            }
            if (!parts.applicability.count(s.honeypot))
                throw SignatureError(Kind::Validation, line,
                                     "honeypot '" + s.honeypot + "' of '" + s.id +
                                         "' has no @applies entry");
            set.regexes_.push_back(s.match_kind == MatchKind::Regex
                                       ? compile(s, line, origin_of(parts, i))
                                       : nullptr);
        }
        set.signatures_ = std::move(parts.signatures);
        set.applicability_ = std::move(parts.applicability);
        set.libraries_ = std::move(parts.libraries);
        set.sessions_ = std::move(parts.sessions);
        return set;
    }
};

namespace {
SignatureSet build_from(Parts parts) { return SignatureSetBuilder::make(std::move(parts)); }
}  // namespace

SignatureSet SignatureSet::build(std::vector<Signature> signatures,
                                 std::map<HoneypotType, std::set<Stage>> applicability,
                                 std::vector<LibraryRecord> libraries,
                                 std::vector<SessionCredential> sessions) {
    Parts parts;
    parts.signatures = std::move(signatures);
    parts.applicability = std::move(applicability);
    parts.libraries = std::move(libraries);
    parts.sessions = std::move(sessions);
    return build_from(std::move(parts));
}

const Signature* SignatureSet::find(std::string_view id) const {
    for (const auto& s : signatures_)
        if (s.id == id) return &s;
    return nullptr;
}

std::optional<Credential> SignatureSet::session_credential(const HoneypotType& h,
                                                           Protocol p) const {
    for (const auto& s : sessions_)
        if (s.honeypot == h && s.protocol == p) return s.credential;
    return std::nullopt;
}

std::vector<HoneypotType> SignatureSet::honeypots() const {
    std::vector<HoneypotType> out;
    for (const auto& s : signatures_)
        if (std::find(out.begin(), out.end(), s.honeypot) == out.end()) out.push_back(s.honeypot);
    return out;
}

bool SignatureSet::operator==(const SignatureSet& o) const {
    return signatures_ == o.signatures_ && applicability_ == o.applicability_ &&
           libraries_ == o.libraries_ && sessions_ == o.sessions_;
}

std::vector<std::string> subject_forms(Stage stage, std::string_view s) {
    std::vector<std::string> forms;
    auto add = [&](std::string f) {
        if (std::find(forms.begin(), forms.end(), f) == forms.end()) forms.push_back(std::move(f));
    };
    auto lf_normalized = [](std::string_view v) {
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (!(v[i] == '\r' && i + 1 < v.size() && v[i + 1] == '\n')) out.push_back(v[i]);
        return out;
    };
    switch (stage) {
        case Stage::HttpBody:
            add(std::string(s));
            add(lf_normalized(s));
            break;
        case Stage::StaticCommand: {
            std::string_view t = s;
            while (!t.empty() && (t.front() == '\x01' || t.front() == '\r' || t.front() == '\n'))
                t.remove_prefix(1);
            while (!t.empty() && (t.back() == '\x03' || t.back() == '\r' || t.back() == '\n' ||
                                  t.back() == ' '))
                t.remove_suffix(1);
            add(std::string(t));
            add(lf_normalized(t));
            std::string joined;
            for (auto line : split_lines(t)) {
                while (!line.empty() && line.back() == ' ') line.remove_suffix(1);
                if (line.empty()) continue;
                if (!joined.empty()) joined.push_back(' ');
                joined.append(line);
            }
            add(joined);
            break;
        }
        default:
            add(std::string(s));
            add(std::string(trim_trailing_newlines(s)));
            for (auto line : split_lines(s)) add(std::string(line));
            break;
    }
    return forms;
}

bool SignatureSet::matches(const Signature& sig, std::string_view subject) const {
    if (subject.empty()) return false;
    auto forms = subject_forms(sig.stage, subject);
    const std::regex* re = nullptr;
    if (sig.match_kind == MatchKind::Regex) {
        const Signature* base = signatures_.data();
        std::less<const Signature*> before;
        if (!signatures_.empty() && !before(&sig, base) && before(&sig, base + signatures_.size()))
            re = regexes_[static_cast<std::size_t>(&sig - base)].get();
    }
    for (const auto& f : forms) {
        if (f.empty()) continue;
        switch (sig.match_kind) {
            case MatchKind::Exact:
                if (f == sig.pattern) return true;
                break;
            case MatchKind::Prefix:
                if (f.starts_with(sig.pattern)) return true;
                break;
            case MatchKind::Substring:
                if (f.find(sig.pattern) != std::string::npos) return true;
                break;
            case MatchKind::Regex:
                if (re ? std::regex_search(f, *re) : std::regex_search(f, std::regex(sig.pattern)))
                    return true;
                break;
        }
    }
    return false;
}

SignatureSet load_signatures(std::string_view source) {
    Parts parts;
    Parser(parts).parse(source, "", nullptr, 0);
    return build_from(std::move(parts));
}

SignatureSet load_signature_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SignatureError(Kind::Parse, 0, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    Parts parts;
    auto dir = path.parent_path();
    Parser(parts).parse(ss.str(), path.filename().string(), &dir, 0);
    return build_from(std::move(parts));
}

std::filesystem::path default_signature_path() {
    return std::filesystem::path(HPFP_DATA_ROOT) / "signatures" / "default.sig";
}

std::string serialize_signatures(const SignatureSet& set) {
    std::ostringstream out;
    for (const auto& [h, stages] : set.stage_applicability()) {
        out << "@applies " << h << " | ";
        bool first = true;
        for (auto s : stages) {
            out << (first ? "" : ", ") << to_string(s);
            first = false;
        }
        out << "\n";
    }
    for (const auto& l : set.libraries())
        out << "@library " << l.honeypot << " | " << to_string(l.protocol) << " | " << l.library
            << " | " << l.updated << "\n";
    for (const auto& s : set.sessions())
        out << "@session " << s.honeypot << " | " << to_string(s.protocol) << " | "
            << escape(s.credential.user) << " | " << escape(s.credential.password) << "\n";
    for (const auto& s : set.signatures()) {
        out << s.id << " | " << s.honeypot << " | " << to_string(s.protocol) << " | "
            << to_string(s.stage) << " | " << to_string(s.match_kind) << " | "
            << (s.command ? escape(*s.command) : "") << " | " << escape(s.pattern) << " | "
            << s.version_marker.value_or("") << " | " << (s.default_config ? "true" : "") << "\n";
    }
    return out.str();
}

std::vector<SignatureHit> match_stage(Stage stage, Protocol protocol, std::string_view subject,
                                      const SignatureSet& set, const HoneypotType* honeypot) {
    std::vector<SignatureHit> hits;
    for (const auto& s : set.signatures()) {
        if (s.is_marker() || s.stage != stage || !protocol_covers(s.protocol, protocol)) continue;
        if (honeypot && s.honeypot != *honeypot) continue;
        if (set.matches(s, subject)) hits.push_back({s.honeypot, &s});
    }
    return hits;
}

std::vector<SignatureHit> match_banner(std::string_view banner, Protocol protocol,
                                       const SignatureSet& set) {
    return match_stage(Stage::Banner, protocol, banner, set);
}

std::vector<SignatureHit> match_http_body(std::string_view response, const SignatureSet& set) {
    std::vector<SignatureHit> hits;
    for (const auto& s : set.signatures()) {
        if (s.is_marker() || s.stage != Stage::HttpBody) continue;
        if (set.matches(s, response)) hits.push_back({s.honeypot, &s});
    }
    return hits;
}

StaticMatch match_static_command(const HoneypotType& honeypot, std::string_view command,
                                 std::string_view response, const SignatureSet& set) {
    StaticMatch result;
    for (const auto& s : set.signatures()) {
        if (s.is_marker() || s.stage != Stage::StaticCommand || s.honeypot != honeypot) continue;
        if (!s.command || *s.command != command) continue;
        if (set.matches(s, response)) return {StaticMatch::Status::Matched, &s};
        result = {StaticMatch::Status::NotMatched, &s};
    }
    return result;
}

}  // namespace hpfp
