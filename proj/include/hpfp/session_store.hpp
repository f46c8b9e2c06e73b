#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hpfp/records.hpp"

namespace hpfp {

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A results store is a directory:
//   <root>/.lock                         advisory lock, held while a session runs
//   <root>/<session_id>/manifest.json    session header plus record counts
//   <root>/<session_id>/verdicts.jsonl
//   <root>/<session_id>/transcripts.jsonl
//   <root>/<session_id>/honeyscores.jsonl
// Sessions are written once; honeyscores may be appended later.
// "s20261016T101500Z-3fa1", not checked against any store.
std::string generate_session_id();

class SessionStore {
public:
    explicit SessionStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path session_dir(const std::string& id) const { return root_ / id; }

    // "s20261016T101500Z-3fa1"; unique within this store.
    std::string new_session_id() const;
    bool contains(const std::string& id) const;
    std::vector<std::string> list() const;

    // Throws StoreError if the session already exists.
    void save(const ScanSession& s);
    ScanSession load(const std::string& id) const;
    void append_honeyscores(const std::string& id, const std::vector<HoneyscoreRecord>& records);

    // flock(LOCK_EX | LOCK_NB) on <root>/.lock; throws StoreError when another
    // process or handle holds it.
    class Lock {
    public:
        explicit Lock(const SessionStore& store);
        ~Lock();
        Lock(const Lock&) = delete;
        Lock& operator=(const Lock&) = delete;

    private:
        int fd_ = -1;
    };

private:
    std::filesystem::path root_;
};

// A session directory given directly, or <store>/<id>.
ScanSession load_session(const std::filesystem::path& dir);

}  // namespace hpfp
