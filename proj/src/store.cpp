#include "chatcad/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include <fmt/format.h>

namespace chatcad {

namespace fs = std::filesystem;

std::string_view segmentName(RecordKind kind) {
    switch (kind) {
        case RecordKind::Case: return "cases.jsonl";
        case RecordKind::Report: return "reports.jsonl";
        case RecordKind::Session: return "sessions.jsonl";
        case RecordKind::Run: return "runs.jsonl";
        case RecordKind::Eval: return "evals.jsonl";
    }
    return "unknown.jsonl";
}

RecordStore::RecordStore(fs::path dir) : RecordStore(std::move(dir), Options{}) {}

RecordStore::RecordStore(fs::path dir, Options options) : dir_(std::move(dir)), options_(options) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw StoreError(fmt::format("cannot create store directory '{}': {}", dir_.string(), ec.message()));
    for (auto kind : kRecordKinds) load(kind);
}

RecordStore::~RecordStore() {
    for (auto& s : segments_) {
        if (s.fd >= 0) ::close(s.fd);
    }
}

void RecordStore::load(RecordKind kind) {
    Segment& seg = segments_[static_cast<std::size_t>(kind)];
    fs::path path = dir_ / segmentName(kind);

    std::string content;
    if (fs::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        content = buf.str();
    }

    std::size_t validBytes = 0;
    std::size_t pos = 0;
    std::size_t lineNo = 0;
    bool missingNewline = false;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        bool terminated = nl != std::string::npos;
        std::string_view line(content.data() + pos, (terminated ? nl : content.size()) - pos);
        std::size_t next = terminated ? nl + 1 : content.size();
        ++lineNo;
        bool last = next >= content.size();

        Json record = Json::parse(line.begin(), line.end(), nullptr, false);
        bool ok = !record.is_discarded() && record.is_object() && record.contains("id") &&
                  record["id"].is_string() && record.contains("data");
        if (!ok) {
            if (last) {
                ++discarded_;
                break;
            }
            throw StoreError(fmt::format("corrupt record at {}:{}", path.string(), lineNo));
        }
        missingNewline = !terminated;
        std::string id = record["id"].get<std::string>();
        if (!seg.latest.count(id)) seg.order.push_back(id);
        seg.latest[id] = std::move(record["data"]);
        validBytes = next;
        pos = next;
    }

    if (validBytes < content.size()) {
        std::error_code ec;
        fs::resize_file(path, validBytes, ec);
        if (ec) throw StoreError(fmt::format("cannot truncate torn tail of '{}': {}", path.string(), ec.message()));
    }

    seg.fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (seg.fd < 0) throw StoreError(fmt::format("cannot open '{}': {}", path.string(), std::strerror(errno)));
    // A complete final record that only lacks its newline is kept.
    if (missingNewline && ::write(seg.fd, "\n", 1) != 1) {
        throw StoreError(fmt::format("cannot repair '{}': {}", path.string(), std::strerror(errno)));
    }
}

void RecordStore::appendLocked(RecordKind kind, const std::string& id, const Json& data) {
    Segment& seg = segments_[static_cast<std::size_t>(kind)];
    std::string line = Json{{"id", id}, {"data", data}}.dump() + "\n";
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
        ssize_t n = ::write(seg.fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw StoreError(fmt::format("write to {} failed: {}", segmentName(kind), std::strerror(errno)));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (options_.syncOnWrite && ::fdatasync(seg.fd) != 0) {
        throw StoreError(fmt::format("fdatasync on {} failed: {}", segmentName(kind), std::strerror(errno)));
    }
    if (!seg.latest.count(id)) seg.order.push_back(id);
    seg.latest[id] = data;
}

void RecordStore::insert(RecordKind kind, const std::string& id, const Json& data) {
    std::unique_lock lock(mutex_);
    if (segments_[static_cast<std::size_t>(kind)].latest.count(id)) {
        throw ConflictError(fmt::format("duplicate id '{}' in {}", id, segmentName(kind)));
    }
    appendLocked(kind, id, data);
}

void RecordStore::upsert(RecordKind kind, const std::string& id, const Json& data) {
    std::unique_lock lock(mutex_);
    appendLocked(kind, id, data);
}

std::optional<Json> RecordStore::get(RecordKind kind, const std::string& id) const {
    std::shared_lock lock(mutex_);
    const Segment& seg = segments_[static_cast<std::size_t>(kind)];
    auto it = seg.latest.find(id);
    if (it == seg.latest.end()) return std::nullopt;
    return std::optional<Json>(std::in_place, it->second);
}

bool RecordStore::contains(RecordKind kind, const std::string& id) const {
    std::shared_lock lock(mutex_);
    return segments_[static_cast<std::size_t>(kind)].latest.count(id) > 0;
}

std::vector<Json> RecordStore::list(RecordKind kind) const {
    std::shared_lock lock(mutex_);
    const Segment& seg = segments_[static_cast<std::size_t>(kind)];
    std::vector<Json> out;
    out.reserve(seg.order.size());
    for (const auto& id : seg.order) out.push_back(seg.latest.at(id));
    return out;
}

std::size_t RecordStore::count(RecordKind kind) const {
    std::shared_lock lock(mutex_);
    return segments_[static_cast<std::size_t>(kind)].order.size();
}

}  // namespace chatcad
