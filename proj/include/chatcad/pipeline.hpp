#pragma once

// End-to-end orchestration: ingest precomputed CAD outputs, refine reports
// through a backend, run sampled evaluations with resumable manifests, and
// host grounded chat sessions. All state lives in the RecordStore.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "chatcad/chat.hpp"
#include "chatcad/config.hpp"
#include "chatcad/eval.hpp"
#include "chatcad/labeler.hpp"
#include "chatcad/llm.hpp"
#include "chatcad/store.hpp"
#include "chatcad/throttle.hpp"

namespace chatcad {

struct RowError {
    std::size_t row = 0;  // 1-based data row
    std::string caseId;
    std::string kind;  // "schema" or "conflict"
    std::string message;
};

struct IngestResult {
    std::vector<std::string> accepted;
    std::vector<RowError> rejected;
};

Json toJson(const IngestResult& r);

// Ingest schema: caseId, draftReport, scores{...}, segmentation[...],
// groundTruthLabels{...}; all but caseId optional.
CaseRecord caseFromIngestRow(const Json& row);

enum class CaseState : std::uint8_t { Pending, Done, Failed };

struct CaseStatus {
    CaseState state = CaseState::Pending;
    std::string reason;    // Failed only
    std::string reportId;  // Done only

    bool operator==(const CaseStatus&) const = default;
};

struct RunParams {
    PromptDesign design = PromptDesign::P3;
    std::string backendId;
    int perCategory = 50;
    std::uint64_t seed = 0;
    bool suppressMention = false;
};

struct RunManifest {
    std::string runId;
    RunParams params;
    std::vector<std::string> caseIds;
    std::map<std::string, CaseStatus> status;
    std::string startedAt;
    std::string finishedAt;

    bool complete() const;
};

Json toJson(const RunManifest& m);
RunManifest manifestFromJson(const Json& j);

// Deterministic id from the run parameters; re-posting the same run resumes it.
std::string runIdFor(const RunParams& params);
// Deterministic id from the refine arguments; backs the idempotency contract.
std::string reportIdFor(const std::string& caseId, PromptDesign design, const std::string& backendId,
                        bool suppressMention);

struct RefineOutcome {
    RefinedReport report;
    bool cached = false;
};

struct RunOutcome {
    RunManifest manifest;
    eval::EvalReport report;
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);
    Pipeline(PipelineConfig config, llm::ClockFn clock, llm::Sleeper sleeper);

    // Replaces or adds a backend (tests inject mocks and scripted transports).
    void registerBackend(std::shared_ptr<llm::ChatBackend> backend, std::optional<llm::BackendConfig> config = {});
    std::vector<std::string> backendIds() const;

    IngestResult ingestRows(const std::vector<Json>& rows);
    IngestResult ingestJsonl(std::string_view text);
    IngestResult ingestCsv(std::string_view text);
    IngestResult ingestFile(const std::filesystem::path& path);

    CaseRecord getCase(const std::string& caseId) const;
    std::vector<CaseRecord> listCases() const;
    RefinedReport getReport(const std::string& reportId) const;
    std::vector<RefinedReport> reportsForCase(const std::string& caseId) const;

    RefineOutcome refineCase(const std::string& caseId, PromptDesign design, const std::string& backendId,
                             bool suppressMention);

    RunOutcome runEvaluation(const RunParams& params);
    RunManifest getRun(const std::string& runId) const;
    std::optional<eval::EvalReport> getEvalReport(const std::string& runId) const;

    // Throttled backend call.
    llm::CompletionResult complete(const std::string& backendId, const std::vector<llm::ChatTurn>& turns);

    chat::ChatService& chat() { return *chat_; }
    RecordStore& store() { return *store_; }
    const labeler::Labeler& labeler() const { return *labeler_; }
    const PipelineConfig& config() const { return config_; }

private:
    struct BackendEntry {
        std::shared_ptr<llm::ChatBackend> backend;
        std::optional<llm::BackendConfig> config;
    };

    BackendEntry backend(const std::string& backendId) const;
    std::shared_ptr<std::mutex> refineLock(const std::string& reportId);
    void saveManifest(const RunManifest& m);

    PipelineConfig config_;
    std::unique_ptr<RecordStore> store_;
    std::unique_ptr<labeler::Labeler> labeler_;
    llm::ThrottleRegistry throttles_;
    mutable std::mutex backendsMutex_;
    std::map<std::string, BackendEntry> backends_;
    std::mutex refineLocksMutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> refineLocks_;
    std::mutex runMutex_;
    std::unique_ptr<chat::ChatService> chat_;
};

}  // namespace chatcad
