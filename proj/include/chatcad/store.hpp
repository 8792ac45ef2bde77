#pragma once

// Append-only JSONL record store. One segment file per record kind; every
// line is {"id": ..., "data": ...}. Later lines for the same id supersede
// earlier ones for versioned kinds. A torn trailing line is dropped on load.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "chatcad/types.hpp"

namespace chatcad {

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RecordKind : std::uint8_t { Case, Report, Session, Run, Eval };

inline constexpr std::array<RecordKind, 5> kRecordKinds = {RecordKind::Case, RecordKind::Report, RecordKind::Session,
                                                           RecordKind::Run, RecordKind::Eval};

std::string_view segmentName(RecordKind kind);  // "cases.jsonl"

class RecordStore {
public:
    struct Options {
        bool syncOnWrite = true;
    };

    explicit RecordStore(std::filesystem::path dir);
    RecordStore(std::filesystem::path dir, Options options);
    ~RecordStore();

    RecordStore(const RecordStore&) = delete;
    RecordStore& operator=(const RecordStore&) = delete;

    // Fails with ConflictError when the id already exists.
    void insert(RecordKind kind, const std::string& id, const Json& data);
    // Appends a new version.
    void upsert(RecordKind kind, const std::string& id, const Json& data);

    std::optional<Json> get(RecordKind kind, const std::string& id) const;
    bool contains(RecordKind kind, const std::string& id) const;
    // Latest versions in first-insertion order.
    std::vector<Json> list(RecordKind kind) const;
    std::size_t count(RecordKind kind) const;

    const std::filesystem::path& directory() const { return dir_; }
    // Lines discarded as torn during the last load.
    std::size_t discardedOnLoad() const { return discarded_; }

private:
    struct Segment {
        int fd = -1;
        std::map<std::string, Json> latest;
        std::vector<std::string> order;
    };

    void load(RecordKind kind);
    void appendLocked(RecordKind kind, const std::string& id, const Json& data);

    std::filesystem::path dir_;
    Options options_;
    mutable std::shared_mutex mutex_;
    std::array<Segment, kRecordKinds.size()> segments_;
    std::size_t discarded_ = 0;
};

}  // namespace chatcad
