// hpfp: scan, diff, report, validate, honeyscore, mimic.
// Exit codes: 0 ok, 1 check failed (validate), 2 usage, 3 runtime error.

#include <CLI11.hpp>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "hpfp/churn.hpp"
#include "hpfp/classify_report.hpp"
#include "hpfp/enrichment.hpp"
#include "hpfp/metascan.hpp"
#include "hpfp/mimic_fleet.hpp"
#include "hpfp/orchestrator.hpp"
#include "hpfp/provider_live.hpp"
#include "hpfp/session_store.hpp"

namespace fs = std::filesystem;
using namespace hpfp;

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> flatten(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& i : items)
        for (auto& x : split_list(i)) out.push_back(x);
    return out;
}

RateLimits parse_rate(const std::string& text) {
    RateLimits r;
    std::vector<int> n;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, '/')) {
        try {
            std::size_t used = 0;
            n.push_back(std::stoi(part, &used));
            if (used != part.size() || n.back() < 0) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw UsageError("--rate expects GLOBAL[/PER_HOST[/DELAY_MS]], got " + text);
        }
    }
    if (n.empty() || n.size() > 3 || n[0] == 0 || (n.size() > 1 && n[1] == 0))
        throw UsageError("--rate expects GLOBAL[/PER_HOST[/DELAY_MS]], got " + text);
    r.global = n[0];
    if (n.size() > 1) r.per_host = n[1];
    if (n.size() > 2) r.per_host_delay = std::chrono::milliseconds(n[2]);
    return r;
}

// Enrichment services: fixtures when given, live lookups only on request.
std::unique_ptr<Enrichment> make_enrichment(const std::string& mode, const std::string& resolver_fixture,
                                            const std::string& registry_fixture) {
    if (mode == "off") return nullptr;
    std::shared_ptr<Resolver> resolver;
    std::shared_ptr<Registry> registry;
    if (mode == "live") {
        resolver = std::make_shared<SystemResolver>();
        registry = std::make_shared<WhoisRegistry>();
    } else {
        resolver = std::make_shared<FixtureResolver>(resolver_fixture.empty() ? FixtureResolver{}
                                                                              : FixtureResolver::load(resolver_fixture));
        registry = std::make_shared<FixtureRegistry>(
            registry_fixture.empty() ? FixtureRegistry{} : FixtureRegistry::load(registry_fixture));
    }
    return std::make_unique<Enrichment>(resolver, registry, ResearchClassifier::load(ResearchClassifier::default_path()),
                                        CloudCatalog::load(CloudCatalog::default_path()));
}

void add_enrichment_options(CLI::App* cmd, std::string& mode, std::string& resolver, std::string& registry) {
    cmd->add_option("--enrich", mode, "DNS/whois source: fixtures, live or off")
        ->check(CLI::IsMember({"fixtures", "live", "off"}));
    cmd->add_option("--resolver-fixture", resolver, "line-delimited PTR/A records");
    cmd->add_option("--registry-fixture", registry, "line-delimited AS registry answers");
}

std::string churn_lines(const ChurnReport& r) {
    std::ostringstream out;
    for (const auto& i : r.new_instances)
        out << nlohmann::json{{"record", "churn_new"}, {"address", i.address.str()}, {"honeypot", i.honeypot}}.dump()
            << "\n";
    for (const auto& i : r.blocked_or_offline)
        out << nlohmann::json{{"record", "churn_lost"}, {"address", i.address.str()}, {"honeypot", i.honeypot}}.dump()
            << "\n";
    for (const auto& x : r.rotation_inferences)
        out << nlohmann::json{{"record", "churn_rotation"},
                              {"old", x.old_address.str()},
                              {"new", x.new_address.str()},
                              {"as_number", x.as_number},
                              {"honeypot", x.honeypot}}
                   .dump()
            << "\n";
    for (auto a : r.unenriched)
        out << nlohmann::json{{"record", "churn_unenriched"}, {"address", a.str()}}.dump() << "\n";
    return out.str();
}

std::vector<mimic::MimicProfile> pick_profiles(const mimic::ProfileLibrary& lib, const std::vector<std::string>& names) {
    std::vector<mimic::MimicProfile> out;
    for (const auto& n : names) {
        if (n == "honeypots" || n == "genuine" || n == "stubs" || n == "all") {
            for (auto k : {mimic::ProfileKind::Honeypot, mimic::ProfileKind::Genuine, mimic::ProfileKind::Stub}) {
                bool take = n == "all" || (n == "honeypots" && k == mimic::ProfileKind::Honeypot) ||
                            (n == "genuine" && k == mimic::ProfileKind::Genuine) ||
                            (n == "stubs" && k == mimic::ProfileKind::Stub);
                if (!take) continue;
                auto sel = lib.select(k);
                out.insert(out.end(), sel.begin(), sel.end());
            }
        } else {
            out.push_back(lib.at(n));
        }
    }
    if (out.empty()) throw UsageError("--profiles selected nothing");
    return out;
}

bool process_alive(long pid) { return pid > 0 && ::kill(pid_t(pid), 0) == 0; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"honeypot fingerprinting scanner"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML/INI file; its values replace flag defaults");
    std::string store_dir = "hpfp-results";
    app.add_option("--store", store_dir, "results directory")->capture_default_str();
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "no progress on stderr");

    // ---- scan
    auto* scan = app.add_subcommand("scan", "probe targets and store a session");
    std::vector<std::string> targets, excludes, port_protocols;
    std::string ports, signatures, fleet_manifest, metascan = "off", scope, rate, source;
    std::string out_dir, enrich_mode = "fixtures", resolver_fx, registry_fx, honeyscore_fx;
    std::vector<std::string> provider_fx;
    bool credential_probe = false, full_trace = false;
    int connect_ms = 3000, read_ms = 10000, workers = 32;
    scan->add_option("--targets", targets, "CIDR, address or @file; comma separated or repeated");
    scan->add_option("--exclude", excludes, "CIDR, address or @file never to contact");
    scan->add_option("--ports", ports, "comma list and ranges (default: built-in port list)");
    scan->add_option("--port-protocol", port_protocols, "PORT=PROTOCOL for non-standard ports");
    scan->add_option("--fleet-manifest", fleet_manifest, "mimic manifest: supplies targets and port map");
    scan->add_option("--signatures", signatures, "signature file (default: bundled set)");
    scan->add_option("--out", out_dir, "results directory (overrides --store)");
    scan->add_option("--metascan", metascan, "off, fixtures or live")->check(CLI::IsMember({"off", "fixtures", "live"}));
    scan->add_option("--provider-fixture", provider_fx, "provider record file; the stem names the provider");
    scan->add_option("--honeyscore-fixture", honeyscore_fx, "score lines served by fixture providers");
    add_enrichment_options(scan, enrich_mode, resolver_fx, registry_fx);
    scan->add_flag("--credential-probe", credential_probe, "try default credentials on non-honeypot SSH/FTP");
    scan->add_option("--i-understand-scope", scope, "networks you are authorised to log into");
    scan->add_option("--rate", rate, "GLOBAL[/PER_HOST[/DELAY_MS]] (default 512/2/100)");
    scan->add_flag("--full-trace", full_trace, "run every stage even after a failure");
    scan->add_option("--source", source, "bind probes to this local address");
    scan->add_option("--connect-timeout-ms", connect_ms)->capture_default_str();
    scan->add_option("--read-timeout-ms", read_ms)->capture_default_str();
    scan->add_option("--workers", workers, "hosts probed in parallel")->capture_default_str();

    // ---- diff
    auto* diff = app.add_subcommand("diff", "churn between two sessions");
    std::string prev, curr, diff_format = "lines", diff_enrich = "off";
    diff->add_option("--prev", prev)->required();
    diff->add_option("--curr", curr)->required();
    diff->add_option("--format", diff_format, "lines or table")->check(CLI::IsMember({"lines", "table"}));
    add_enrichment_options(diff, diff_enrich, resolver_fx, registry_fx);

    // ---- report
    auto* report = app.add_subcommand("report", "render a stored session");
    std::string session_id, format = "summary", banners_file, report_prev;
    report->add_option("--session", session_id)->required();
    report->add_option("--format", format, "lines, table or summary")->capture_default_str();
    report->add_option("--prev", report_prev, "include churn against this earlier session");
    report->add_option("--vulnerable-banners", banners_file, "banner list (default: bundled)");
    std::string report_enrich = "off";
    add_enrichment_options(report, report_enrich, resolver_fx, registry_fx);

    // ---- validate
    auto* validate = app.add_subcommand("validate", "check honeypot verdicts against popular-domain lists");
    std::vector<std::string> domain_lists;
    validate->add_option("--session", session_id)->required();
    validate->add_option("--domain-lists", domain_lists, "domain list files")->required();
    validate->add_option("--resolver-fixture", resolver_fx, "A records instead of the system resolver");

    // ---- honeyscore
    auto* honeyscore = app.add_subcommand("honeyscore", "fetch provider honeyscores for detected honeypots");
    std::string hs_provider = "fixture";
    honeyscore->add_option("--session", session_id)->required();
    honeyscore->add_option("--provider", hs_provider, "fixture or shodan")->check(CLI::IsMember({"fixture", "shodan"}));
    honeyscore->add_option("--honeyscore-fixture", honeyscore_fx, "score lines for --provider fixture");

    // ---- mimic
    auto* mimic_cmd = app.add_subcommand("mimic", "local fleet of emulated services");
    mimic_cmd->require_subcommand(1);
    auto* up = mimic_cmd->add_subcommand("up", "serve profiles until stopped");
    auto* down = mimic_cmd->add_subcommand("down", "stop a fleet started with mimic up");
    std::vector<std::string> profiles;
    std::string manifest_path = "mimic-manifest.json", first_address = "127.10.0.1", profile_dir;
    int base_port = 20000;
    bool allow_non_loopback = false;
    up->add_option("--profiles", profiles, "profile names, or honeypots, genuine, stubs, all")->required();
    up->add_option("--manifest", manifest_path)->capture_default_str();
    up->add_option("--first-address", first_address)->capture_default_str();
    up->add_option("--base-port", base_port)->capture_default_str();
    up->add_option("--profile-dir", profile_dir, "profile directory (default: bundled)");
    up->add_flag("--allow-non-loopback", allow_non_loopback, "permit binding outside 127.0.0.0/8");
    down->add_option("--manifest", manifest_path)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    auto log = [&](const std::string& m) {
        if (!quiet) std::cerr << m << "\n";
    };

    try {
        if (*scan) {
            ScanConfig cfg;
            TargetSpec spec{flatten(targets), flatten(excludes)};
            if (!fleet_manifest.empty()) {
                auto m = mimic::FleetManifest::from_json(read_text(fleet_manifest));
                if (spec.targets.empty())
                    for (auto a : m.addresses()) spec.targets.push_back(a.str());
                if (ports.empty()) cfg.ports.clear();
                for (const auto& [port, proto] : m.port_map()) {
                    if (ports.empty()) cfg.ports.push_back(port);
                    cfg.port_protocols[port] = proto;
                }
            }
            if (spec.targets.empty()) throw UsageError("scan needs --targets or --fleet-manifest");
            if (!ports.empty()) cfg.ports = parse_ports(ports);
            for (const auto& pp : flatten(port_protocols)) {
                auto eq = pp.find('=');
                auto proto = eq == std::string::npos ? std::nullopt : parse_protocol(pp.substr(eq + 1));
                if (!proto) throw UsageError("--port-protocol expects PORT=PROTOCOL, got " + pp);
                auto p = parse_ports(pp.substr(0, eq));
                for (auto port : p) cfg.port_protocols[port] = *proto;
            }
            if (credential_probe && scope.empty())
                throw UsageError("--credential-probe requires --i-understand-scope naming the authorised networks");
            if (!credential_probe && !scope.empty()) throw UsageError("--i-understand-scope without --credential-probe");
            cfg.probe.credential_probe = credential_probe;
            cfg.credential_scope = scope;
            cfg.pipeline.full_trace = full_trace;
            if (!rate.empty()) cfg.rate = parse_rate(rate);
            if (!source.empty()) {
                auto a = Ipv4::parse(source);
                if (!a) throw UsageError("--source expects an IPv4 address");
                cfg.probe.source = *a;
                cfg.scanner_identity = source;
            }
            cfg.probe.connect_timeout = net::Millis(connect_ms);
            cfg.scan_connect_timeout = net::Millis(connect_ms);
            cfg.probe.read_timeout = net::Millis(read_ms);
            cfg.host_workers = std::size_t(std::max(1, workers));
            cfg.log = log;

            auto set = signatures.empty() ? load_signature_file(default_signature_path()) : load_signature_file(signatures);
            auto targets_set = ingest_targets(spec);

            std::vector<std::unique_ptr<ProviderClient>> providers;
            std::unique_ptr<Enrichment> enrichment;
            cfg.metascan_mode = metascan;
            if (metascan == "fixtures") {
                if (provider_fx.empty()) throw UsageError("--metascan=fixtures needs --provider-fixture");
                std::optional<fs::path> scores;
                if (!honeyscore_fx.empty()) scores = honeyscore_fx;
                for (const auto& f : provider_fx)
                    providers.push_back(FixtureProvider::load(fs::path(f).stem().string(), f, scores));
            } else if (metascan == "live") {
                if (auto s = ShodanClient::from_env()) providers.push_back(std::move(s));
                if (auto c = CensysClient::from_env()) providers.push_back(std::move(c));
                if (providers.empty())
                    throw UsageError("--metascan=live needs SHODAN_API_KEY or CENSYS_API_ID/CENSYS_API_SECRET");
            }
            if (metascan != "off") {
                enrichment = make_enrichment(metascan == "live" && enrich_mode == "fixtures" && resolver_fx.empty() &&
                                                     registry_fx.empty()
                                                 ? "live"
                                                 : enrich_mode,
                                             resolver_fx, registry_fx);
                if (!enrichment) throw UsageError("metascan needs enrichment (--enrich fixtures or live)");
                cfg.enrichment = enrichment.get();
                for (auto& p : providers) cfg.providers.push_back(p.get());
            }

            SessionStore store(out_dir.empty() ? store_dir : out_dir);
            SessionStore::Lock lock(store);
            cfg.session_id = store.new_session_id();
            auto session = run_scan_session(spec, targets_set, set, cfg);
            store.save(session);
            auto sum = summarize(session);
            std::cout << "session " << session.session_id << "\n"
                      << "endpoints " << sum.endpoints << ", hosts " << sum.hosts << ", negatives " << sum.negatives
                      << ", errors " << sum.errors << "\n";
            for (const auto& [type, n] : sum.probe) std::cout << "probe " << type << " " << n << "\n";
            for (const auto& [type, n] : sum.metascan) std::cout << "metascan " << type << " " << n << "\n";
            for (const auto& w : session.warnings) log("warning: " + w);
            return 0;
        }

        auto open_store = [&] { return SessionStore(store_dir); };

        if (*diff) {
            auto store = open_store();
            auto a = store.load(prev);
            auto b = store.load(curr);
            auto enrichment = make_enrichment(diff_enrich, resolver_fx, registry_fx);
            if (!enrichment) log("no enrichment: rotations are not inferred");
            auto set = load_signature_file(default_signature_path());
            auto r = diff_sessions(a, b, set, enrichment.get());
            if (diff_format == "lines") {
                std::cout << churn_lines(r);
            } else {
                ReportInput in{&b, {}, {}, r};
                std::cout << export_report(in, ReportFormat::Table);
            }
            return 0;
        }

        if (*report) {
            auto store = open_store();
            auto fmt = parse_report_format(format);
            auto s = store.load(session_id);
            auto set = load_signature_file(default_signature_path());
            ReportInput in{&s, annotate(s, set), {}, std::nullopt};
            in.findings = flag_vulnerable_nonhoneypot(
                s, load_vulnerable_banners(banners_file.empty() ? default_vulnerable_banners_path() : fs::path(banners_file)));
            if (!report_prev.empty()) {
                auto enrichment = make_enrichment(report_enrich, resolver_fx, registry_fx);
                in.churn = diff_sessions(store.load(report_prev), s, set, enrichment.get());
            }
            std::cout << export_report(in, fmt);
            return 0;
        }

        if (*validate) {
            auto store = open_store();
            auto s = store.load(session_id);
            std::unique_ptr<Resolver> resolver;
            if (resolver_fx.empty())
                resolver = std::make_unique<SystemResolver>();
            else
                resolver = std::make_unique<FixtureResolver>(FixtureResolver::load(resolver_fx));
            std::vector<fs::path> lists;
            for (const auto& l : flatten(domain_lists)) lists.emplace_back(l);
            auto r = validate_ground_truth(s, lists, *resolver);
            for (const auto& st : r.lists)
                std::cout << "list " << st.list << ": " << st.domains << " domains, " << st.resolved << " resolved, "
                          << st.unresolved << " unresolved, " << st.addresses << " addresses\n";
            for (const auto& c : r.intersection)
                std::cout << "collision " << c.list << " " << c.domain << " " << c.address.str() << "\n";
            for (const auto& w : r.warnings) log("warning: " + w);
            std::cout << "intersection " << r.intersection.size() << "\n";
            return r.passed() ? 0 : 1;
        }

        if (*honeyscore) {
            auto store = open_store();
            auto s = store.load(session_id);
            std::unique_ptr<ProviderClient> provider;
            if (hs_provider == "shodan") {
                provider = ShodanClient::from_env();
                if (!provider) throw UsageError("--provider shodan needs SHODAN_API_KEY");
            } else {
                if (honeyscore_fx.empty()) throw UsageError("--provider fixture needs --honeyscore-fixture");
                auto fx = std::make_unique<FixtureProvider>("fixture");
                for (const auto& [a, score] : parse_honeyscore_fixture(read_text(honeyscore_fx))) fx->set_score(a, score);
                provider = std::move(fx);
            }
            std::set<Ipv4> have;
            for (const auto& h : s.honeyscores) have.insert(h.address);
            std::set<Ipv4> wanted;
            for (const auto& v : s.verdicts)
                if (v.is_honeypot && !have.count(v.endpoint.address)) wanted.insert(v.endpoint.address);
            std::vector<HoneyscoreRecord> fetched;
            for (auto a : wanted) {
                try {
                    fetched.push_back(fetch_honeyscore(a, *provider));
                } catch (const ProtocolError&) {
                    throw;
                } catch (const std::exception& e) {
                    log("warning: honeyscore " + a.str() + ": " + e.what());
                }
            }
            if (!fetched.empty()) {
                SessionStore::Lock lock(store);
                store.append_honeyscores(s.session_id, fetched);
            }
            s.honeyscores.insert(s.honeyscores.end(), fetched.begin(), fetched.end());
            for (const auto& [type, h] : honeyscore_histogram(s)) std::cout << type << " " << histogram_row(h) << "\n";
            return 0;
        }

        if (*up) {
            auto lib = mimic::ProfileLibrary::load_dir(profile_dir.empty() ? mimic::default_profile_dir()
                                                                           : fs::path(profile_dir));
            auto chosen = pick_profiles(lib, flatten(profiles));
            mimic::FleetOptions opts;
            auto first = Ipv4::parse(first_address);
            if (!first) throw UsageError("--first-address expects an IPv4 address");
            if (base_port < 0 || base_port > 65535) throw UsageError("--base-port out of range");
            opts.first_address = *first;
            opts.base_port = std::uint16_t(base_port);
            opts.allow_non_loopback = allow_non_loopback;

            // Block the stop signals before the fleet starts its threads.
            sigset_t stop;
            sigemptyset(&stop);
            sigaddset(&stop, SIGINT);
            sigaddset(&stop, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &stop, nullptr);

            auto fleet = mimic::Fleet::spawn(chosen, opts);
            auto manifest = fleet->manifest();
            manifest.pid = ::getpid();
            {
                auto tmp = manifest_path + ".tmp";
                std::ofstream(tmp) << manifest.to_json();
                fs::rename(tmp, manifest_path);
            }
            std::cout << "mimic up: " << chosen.size() << " profiles, " << manifest.entries.size()
                      << " listeners, manifest " << manifest_path << std::endl;
            int sig = 0;
            sigwait(&stop, &sig);
            fleet->stop();
            std::error_code ec;
            fs::remove(manifest_path, ec);
            std::cout << "mimic down" << std::endl;
            return 0;
        }

        if (*down) {
            auto m = mimic::FleetManifest::from_json(read_text(manifest_path));
            if (!process_alive(m.pid)) {
                log("fleet process " + std::to_string(m.pid) + " is not running");
                std::error_code ec;
                fs::remove(manifest_path, ec);
                return 0;
            }
            ::kill(pid_t(m.pid), SIGTERM);
            for (int i = 0; i < 200 && process_alive(m.pid) && fs::exists(manifest_path); ++i)
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            if (fs::exists(manifest_path) && process_alive(m.pid)) throw std::runtime_error("fleet did not stop");
            std::cout << "stopped " << m.pid << "\n";
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage: " << e.what() << "\n";
        return 2;
    } catch (const ScopeError& e) {
        std::cerr << "scope: " << e.what() << "\n";
        return 2;
    } catch (const TargetError& e) {
        std::cerr << "targets: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
