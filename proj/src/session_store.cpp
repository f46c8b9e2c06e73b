#include "hpfp/session_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstring>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

namespace hpfp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw StoreError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text, std::ios::openmode mode = std::ios::trunc) {
    std::ofstream out(p, std::ios::binary | std::ios::out | mode);
    if (!out) throw StoreError("cannot write " + p.string());
    out << text;
    out.flush();
    if (!out) throw StoreError("short write to " + p.string());
}

std::string utc_stamp() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

}  // namespace

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (!fs::is_directory(root_)) throw StoreError("results store " + root_.string() + " is not a directory");
}

std::string generate_session_id() {
    static thread_local std::mt19937 rng(std::random_device{}());
    char tail[8];
    std::snprintf(tail, sizeof tail, "%04x", static_cast<unsigned>(rng() & 0xffff));
    return "s" + utc_stamp() + "-" + tail;
}

std::string SessionStore::new_session_id() const {
    for (;;) {
        auto id = generate_session_id();
        if (!contains(id)) return id;
    }
}

bool SessionStore::contains(const std::string& id) const { return fs::exists(root_ / id / "manifest.json"); }

std::vector<std::string> SessionStore::list() const {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(root_))
        if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

void SessionStore::save(const ScanSession& s) {
    if (s.session_id.empty() || s.session_id.find('/') != std::string::npos || s.session_id[0] == '.')
        throw StoreError("bad session id '" + s.session_id + "'");
    auto dir = root_ / s.session_id;
    if (fs::exists(dir)) throw StoreError("session " + s.session_id + " already exists");
    // Records land in a scratch directory that is renamed into place, so a
    // crash never leaves a half-written session behind.
    auto tmp = root_ / ("." + s.session_id + ".tmp");
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    std::vector<json> rows;
    for (const auto& v : s.verdicts) rows.push_back(to_json(v));
    write_file(tmp / "verdicts.jsonl", to_lines(rows));
    rows.clear();
    for (const auto& t : s.transcripts) rows.push_back(to_json(t));
    write_file(tmp / "transcripts.jsonl", to_lines(rows));
    rows.clear();
    for (const auto& h : s.honeyscores) rows.push_back(to_json(h));
    write_file(tmp / "honeyscores.jsonl", to_lines(rows));

    auto header = session_header(s);
    header["counts"] = {{"verdicts", s.verdicts.size()}, {"transcripts", s.transcripts.size()}};
    write_file(tmp / "manifest.json", header.dump(2) + "\n");
    fs::rename(tmp, dir);
}

ScanSession load_session(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) throw StoreError("no session at " + dir.string());
    auto header = json::parse(slurp(dir / "manifest.json"), nullptr, false);
    if (header.is_discarded()) throw StoreError(dir.string() + ": malformed manifest");
    ScanSession s;
    try {
        s = session_from_header(header);
        for (const auto& j : parse_lines(slurp(dir / "verdicts.jsonl"))) s.verdicts.push_back(verdict_from_json(j));
        for (const auto& j : parse_lines(slurp(dir / "transcripts.jsonl")))
            s.transcripts.push_back(transcript_from_json(j));
        if (fs::exists(dir / "honeyscores.jsonl"))
            for (const auto& j : parse_lines(slurp(dir / "honeyscores.jsonl")))
                s.honeyscores.push_back(honeyscore_from_json(j));
    } catch (const StoreError&) {
        throw;
    } catch (const std::exception& e) {
        throw StoreError(dir.string() + ": " + e.what());
    }
    if (header.contains("counts")) {
        auto nv = header["counts"].value("verdicts", s.verdicts.size());
        auto nt = header["counts"].value("transcripts", s.transcripts.size());
        if (nv != s.verdicts.size() || nt != s.transcripts.size())
            throw StoreError(dir.string() + ": record counts disagree with the manifest");
    }
    return s;
}

ScanSession SessionStore::load(const std::string& id) const { return load_session(root_ / id); }

void SessionStore::append_honeyscores(const std::string& id, const std::vector<HoneyscoreRecord>& records) {
    if (!contains(id)) throw StoreError("no session " + id);
    std::vector<json> rows;
    for (const auto& h : records) rows.push_back(to_json(h));
    write_file(root_ / id / "honeyscores.jsonl", to_lines(rows), std::ios::app);
}

SessionStore::Lock::Lock(const SessionStore& store) {
    auto path = store.root() / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw StoreError("cannot open " + path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw StoreError("results store " + store.root().string() + " is in use by another session");
    }
}

SessionStore::Lock::~Lock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

}  // namespace hpfp
