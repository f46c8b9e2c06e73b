#include "hpfp/mimic_profile.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "hpfp/bytes.hpp"

namespace hpfp::mimic {

namespace {

using Entries = ProfileSource::Entries;

std::optional<Action> parse_action(std::string_view s) {
    if (s == "send") return Action::Send;
    if (s == "send_close") return Action::SendClose;
    if (s == "close") return Action::Close;
    if (s == "reset") return Action::Reset;
    if (s == "silent") return Action::Silent;
    return std::nullopt;
}

std::optional<Engine> parse_engine(std::string_view s) {
    if (s == "line") return Engine::Line;
    if (s == "raw") return Engine::Raw;
    if (s == "http") return Engine::Http;
    if (s == "ssh") return Engine::Ssh;
    if (s == "s7") return Engine::S7;
    return std::nullopt;
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        auto piece = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
        if (!piece.empty()) out.emplace_back(piece);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::optional<std::string> last_value(const Entries& e, std::string_view key) {
    std::optional<std::string> out;
    for (const auto& [k, v] : e)
        if (k == key) out = v;
    return out;
}

std::string expand_vars(const std::string& value, const std::map<std::string, std::string>& vars,
                        const std::string& where, int depth = 0) {
    if (depth > 8) throw ProfileError(where, "variable expansion too deep");
    std::string out;
    std::size_t i = 0;
    while (i < value.size()) {
        if (value.compare(i, 2, "${") == 0) {
            auto end = value.find('}', i);
            if (end == std::string::npos) throw ProfileError(where, "unterminated ${");
            auto name = value.substr(i + 2, end - i - 2);
            auto it = vars.find(name);
            if (it == vars.end()) throw ProfileError(where, "unknown variable '" + name + "'");
            out += expand_vars(it->second, vars, where, depth + 1);
            i = end + 1;
        } else {
            out.push_back(value[i++]);
        }
    }
    return out;
}

Rule parse_rule(const std::string& text, const std::string& where) {
    auto f = split_fields(text);
    if (f.size() < 4 || f.size() > 5) throw ProfileError(where, "rule needs 4 or 5 fields: " + text);
    Rule r;
    if (f[0] != "-") {
        r.stage = parse_stage(f[0]);
        if (!r.stage) throw ProfileError(where, "unknown stage tag '" + f[0] + "'");
    }
    if (f[1] == "any") {
        r.any = true;
    } else {
        auto k = parse_match_kind(f[1]);
        if (!k) throw ProfileError(where, "unknown match kind '" + f[1] + "'");
        r.kind = *k;
    }
    r.pattern = unescape(f[2]);
    if (!r.any && r.pattern.empty()) throw ProfileError(where, "empty rule pattern");
    if (!r.any && r.kind == MatchKind::Regex) {
        try {
            r.re = std::make_shared<const std::regex>(r.pattern, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw ProfileError(where, std::string("bad regex: ") + e.what());
        }
    }
    auto a = parse_action(f[3]);
    if (!a) throw ProfileError(where, "unknown action '" + f[3] + "'");
    r.action = *a;
    if (f.size() == 5) r.payload = unescape(f[4]);
    return r;
}

std::optional<Stage> rule_tag(const std::string& text) {
    auto f = split_fields(text);
    if (f.empty() || f[0] == "-") return std::nullopt;
    return parse_stage(f[0]);
}

struct Working {
    Entries profile;
    std::vector<std::pair<std::string, Entries>> listeners;

    Entries* listener(const std::string& name) {
        for (auto& [n, e] : listeners)
            if (n == name) return &e;
        return nullptr;
    }
};

// Applies one override section. The first mention of a key replaces existing
// values, later mentions append; rules are prepended so they win over the base.
void apply_overrides(Working& w, const Entries& overrides, const std::string& where) {
    std::set<std::pair<std::string, std::string>> touched;
    std::map<std::string, std::size_t> rule_insert;
    for (const auto& [key, value] : overrides) {
        std::string target = "profile";
        std::string k = key;
        auto dot = key.find('.');
        if (dot != std::string::npos && key.compare(0, dot, "var") != 0) {
            target = key.substr(0, dot);
            k = key.substr(dot + 1);
        }
        Entries* e = target == "profile" ? &w.profile : w.listener(target);
        if (!e) throw ProfileError(where, "override names unknown listener '" + target + "'");
        if (k == "rule") {
            auto& pos = rule_insert[target];
            e->insert(e->begin() + static_cast<std::ptrdiff_t>(pos), {k, value});
            ++pos;
            continue;
        }
        if (touched.insert({target, k}).second)
            e->erase(std::remove_if(e->begin(), e->end(), [&](const auto& kv) { return kv.first == k; }),
                     e->end());
        e->emplace_back(k, value);
    }
}

MimicProfile compile(const Working& w, const std::string& file) {
    MimicProfile p;
    std::map<std::string, std::string> vars;
    for (const auto& [k, v] : w.profile)
        if (k.rfind("var.", 0) == 0) vars[k.substr(4)] = v;

    p.name = last_value(w.profile, "name").value_or("");
    std::string where = file + " (" + p.name + ")";
    if (p.name.empty()) throw ProfileError(file, "profile has no name");
    auto kind = last_value(w.profile, "kind").value_or("honeypot");
    if (kind == "honeypot") p.kind = ProfileKind::Honeypot;
    else if (kind == "genuine") p.kind = ProfileKind::Genuine;
    else if (kind == "stub") p.kind = ProfileKind::Stub;
    else throw ProfileError(where, "unknown kind '" + kind + "'");
    p.honeypot = last_value(w.profile, "honeypot");
    if (p.kind == ProfileKind::Honeypot && !p.honeypot)
        throw ProfileError(where, "honeypot profile without honeypot type");
    p.version = last_value(w.profile, "version");
    if (p.version && p.version->empty()) p.version.reset();
    p.default_config = last_value(w.profile, "default_config").value_or("true") == "true";
    for (const auto& [k, v] : w.profile) {
        if (k != "ban") continue;
        for (const auto& a : split_list(v)) {
            auto ip = Ipv4::parse(a);
            if (!ip) throw ProfileError(where, "bad ban address '" + a + "'");
            p.ban.push_back(*ip);
        }
    }

    for (const auto& [lname, entries] : w.listeners) {
        Listener l;
        l.name = lname;
        std::string lwhere = where + " listener " + lname;
        for (const auto& [k, v] : entries) l.settings.emplace_back(k, expand_vars(v, vars, lwhere));
        auto port = l.get("port");
        if (!port) throw ProfileError(lwhere, "missing port");
        long pv = std::stol(*port);
        if (pv < 0 || pv > 65535) throw ProfileError(lwhere, "port out of range");
        l.port = static_cast<std::uint16_t>(pv);
        auto proto = l.get("protocol");
        auto pp = proto ? parse_protocol(*proto) : std::nullopt;
        if (!pp) throw ProfileError(lwhere, "missing or unknown protocol");
        l.protocol = *pp;
        auto eng = l.get("engine");
        auto ee = eng ? parse_engine(*eng) : std::nullopt;
        if (!ee) throw ProfileError(lwhere, "missing or unknown engine");
        l.engine = *ee;
        for (const auto& r : l.all("rule")) parse_rule(r, lwhere);  // validate early
        p.listeners.push_back(std::move(l));
    }
    return p;
}

Working working_copy(const ProfileSource& src) {
    Working w;
    w.profile = src.profile;
    w.listeners = src.listeners;
    return w;
}

}  // namespace

bool Rule::matches(std::string_view unit) const {
    if (any) return true;
    switch (kind) {
        case MatchKind::Exact: return unit == pattern;
        case MatchKind::Prefix: return unit.substr(0, pattern.size()) == pattern;
        case MatchKind::Substring: return unit.find(pattern) != std::string_view::npos;
        case MatchKind::Regex:
            return re && std::regex_search(unit.begin(), unit.end(), *re);
    }
    return false;
}

std::optional<std::string> Listener::get(const std::string& key) const {
    std::optional<std::string> out;
    for (const auto& [k, v] : settings)
        if (k == key) out = v;
    return out;
}

std::string Listener::get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

std::optional<Bytes> Listener::bytes(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    return unescape(*v);
}

std::vector<std::string> Listener::all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : settings)
        if (k == key) out.push_back(v);
    return out;
}

long Listener::get_int(const std::string& key, long fallback) const {
    auto v = get(key);
    return v ? std::stol(*v) : fallback;
}

bool Listener::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    return v ? *v == "true" : fallback;
}

std::vector<Rule> Listener::rules() const {
    std::vector<Rule> out;
    for (const auto& r : all("rule")) out.push_back(parse_rule(r, name));
    return out;
}

Rule Listener::fallback() const {
    Rule r;
    r.any = true;
    r.action = Action::Silent;
    auto v = get("fallback");
    if (!v) return r;
    auto f = split_fields(*v);
    auto a = parse_action(f[0]);
    if (!a) throw ProfileError(name, "unknown fallback action '" + f[0] + "'");
    r.action = *a;
    if (f.size() > 1) r.payload = unescape(f[1]);
    return r;
}

const Listener* MimicProfile::listener(const std::string& n) const {
    for (const auto& l : listeners)
        if (l.name == n) return &l;
    return nullptr;
}

ProfileSource parse_profile_source(std::string_view text, const std::string& file) {
    ProfileSource src;
    src.file = file;
    Entries* cur = nullptr;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string where = file + ":" + std::to_string(lineno);
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ProfileError(where, "bad section header");
            auto inner = std::string(trim(line.substr(1, line.size() - 2)));
            auto sp = inner.find(' ');
            std::string kind = inner.substr(0, sp);
            std::string arg = sp == std::string::npos ? "" : std::string(trim(inner.substr(sp + 1)));
            if (kind == "profile") {
                cur = &src.profile;
            } else if (kind == "listener" && !arg.empty()) {
                src.listeners.emplace_back(arg, Entries{});
                cur = &src.listeners.back().second;
            } else if (kind == "variant" && !arg.empty()) {
                src.variants.emplace_back(arg, Entries{});
                cur = &src.variants.back().second;
            } else if (kind == "mutation") {
                auto st = parse_stage(arg);
                if (!st || !is_signature_stage(*st)) throw ProfileError(where, "bad mutation stage");
                src.mutations.emplace_back(*st, Entries{});
                cur = &src.mutations.back().second;
            } else {
                throw ProfileError(where, "unknown section '" + inner + "'");
            }
            continue;
        }
        if (!cur) throw ProfileError(where, "entry outside a section");
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ProfileError(where, "expected key = value");
        bool append = eq > 0 && line[eq - 1] == '+';
        auto key = std::string(trim(line.substr(0, append ? eq - 1 : eq)));
        auto value = std::string(trim(line.substr(eq + 1)));
        if (key.empty()) throw ProfileError(where, "empty key");
        if (append) {
            auto it = std::find_if(cur->rbegin(), cur->rend(),
                                   [&](const auto& kv) { return kv.first == key; });
            if (it == cur->rend()) throw ProfileError(where, "'+=' without a previous '" + key + "'");
            it->second += value;
        } else {
            cur->emplace_back(std::move(key), std::move(value));
        }
    }
    return src;
}

void ProfileLibrary::add(ProfileSource src) {
    auto base = compile(working_copy(src), src.file);
    base.base = base.name;
    auto push = [&](MimicProfile p) {
        if (find(p.name)) throw ProfileError(src.file, "duplicate profile name '" + p.name + "'");
        profiles_.push_back(std::move(p));
    };
    push(base);
    for (const auto& [vname, entries] : src.variants) {
        auto w = working_copy(src);
        apply_overrides(w, entries, src.file + " variant " + vname);
        auto p = compile(w, src.file);
        p.name = vname;
        p.base = base.name;
        p.is_variant = true;
        push(std::move(p));
    }
    sources_.push_back(std::move(src));
}

ProfileLibrary ProfileLibrary::load_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".profile") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    ProfileLibrary lib;
    for (const auto& f : files) {
        std::ifstream in(f);
        std::stringstream ss;
        ss << in.rdbuf();
        lib.add(parse_profile_source(ss.str(), f.filename().string()));
    }
    return lib;
}

const MimicProfile* ProfileLibrary::find(std::string_view name) const {
    for (const auto& p : profiles_)
        if (p.name == name) return &p;
    return nullptr;
}

const MimicProfile& ProfileLibrary::at(std::string_view name) const {
    auto p = find(name);
    if (!p) throw ProfileError("library", "no profile named '" + std::string(name) + "'");
    return *p;
}

std::vector<MimicProfile> ProfileLibrary::select(ProfileKind kind, bool include_variants) const {
    std::vector<MimicProfile> out;
    for (const auto& p : profiles_)
        if (p.kind == kind && (include_variants || !p.is_variant)) out.push_back(p);
    return out;
}

std::vector<Stage> ProfileLibrary::mutation_stages(std::string_view base) const {
    std::vector<Stage> out;
    for (const auto& src : sources_) {
        if (last_value(src.profile, "name") != std::string(base)) continue;
        for (const auto& [st, e] : src.mutations) out.push_back(st);
    }
    return out;
}

MimicProfile ProfileLibrary::mutate(std::string_view base, Stage stage) const {
    for (const auto& src : sources_) {
        if (last_value(src.profile, "name") != std::string(base)) continue;
        for (const auto& [st, entries] : src.mutations) {
            if (st != stage) continue;
            auto w = working_copy(src);
            for (auto& [lname, le] : w.listeners)
                le.erase(std::remove_if(le.begin(), le.end(),
                                        [&](const auto& kv) {
                                            return kv.first == "rule" && rule_tag(kv.second) == stage;
                                        }),
                         le.end());
            Entries overrides;
            std::set<Stage> coupled;
            for (const auto& [k, v] : entries) {
                if (k == "also_breaks") {
                    for (const auto& s : split_list(v))
                        if (auto ps = parse_stage(s)) coupled.insert(*ps);
                } else {
                    overrides.emplace_back(k, v);
                }
            }
            apply_overrides(w, overrides, src.file + " mutation " + std::string(to_string(stage)));
            auto p = compile(w, src.file);
            p.base = p.name;
            p.name = p.name + "~" + std::string(to_string(stage));
            p.mutated_stage = stage;
            p.coupled_stages = std::move(coupled);
            return p;
        }
    }
    throw ProfileError("library", "no mutation " + std::string(to_string(stage)) + " for '" +
                                      std::string(base) + "'");
}

std::filesystem::path default_profile_dir() {
    return std::filesystem::path(HPFP_DATA_ROOT) / "profiles";
}

std::string_view to_string(ProfileKind k) {
    switch (k) {
        case ProfileKind::Honeypot: return "honeypot";
        case ProfileKind::Genuine: return "genuine";
        case ProfileKind::Stub: return "stub";
    }
    return "?";
}

}  // namespace hpfp::mimic
