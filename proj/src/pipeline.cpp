#include "chatcad/pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "chatcad/bridge.hpp"
#include "chatcad/csv.hpp"

namespace chatcad {

namespace {

std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string_view stateName(CaseState s) {
    switch (s) {
        case CaseState::Pending: return "pending";
        case CaseState::Done: return "done";
        case CaseState::Failed: return "failed";
    }
    return "pending";
}

CaseState stateFromName(std::string_view n) {
    if (n == "pending") return CaseState::Pending;
    if (n == "done") return CaseState::Done;
    if (n == "failed") return CaseState::Failed;
    throw DomainError(fmt::format("unknown case state '{}'", n));
}

}  // namespace

Json toJson(const IngestResult& r) {
    Json rejected = Json::array();
    for (const auto& e : r.rejected) {
        rejected.push_back({{"row", e.row}, {"caseId", e.caseId}, {"kind", e.kind}, {"message", e.message}});
    }
    return Json{{"accepted", r.accepted}, {"rejected", rejected}};
}

CaseRecord caseFromIngestRow(const Json& row) {
    if (!row.is_object()) throw DomainError("row must be a JSON object");
    static const std::set<std::string> known = {"caseId", "draftReport", "scores", "segmentation", "groundTruthLabels",
                                                "createdAt"};
    for (const auto& [key, _] : row.items()) {
        if (!known.count(key)) throw DomainError(fmt::format("unknown field '{}'", key));
    }
    try {
        CaseRecord c = row.get<CaseRecord>();
        if (c.createdAt.empty()) c.createdAt = utcTimestamp();
        return c;
    } catch (const Json::exception& e) {
        throw DomainError(e.what());
    }
}

bool RunManifest::complete() const {
    for (const auto& [_, s] : status) {
        if (s.state == CaseState::Pending) return false;
    }
    return true;
}

Json toJson(const RunManifest& m) {
    Json status = Json::object();
    for (const auto& [id, s] : m.status) {
        Json e{{"state", std::string(stateName(s.state))}};
        if (!s.reason.empty()) e["reason"] = s.reason;
        if (!s.reportId.empty()) e["reportId"] = s.reportId;
        status[id] = e;
    }
    return Json{{"runId", m.runId},
                {"promptDesign", std::string(designName(m.params.design))},
                {"backendId", m.params.backendId},
                {"perCategory", m.params.perCategory},
                {"seed", m.params.seed},
                {"suppressMention", m.params.suppressMention},
                {"caseIds", m.caseIds},
                {"perCaseStatus", status},
                {"startedAt", m.startedAt},
                {"finishedAt", m.finishedAt},
                {"complete", m.complete()}};
}

RunManifest manifestFromJson(const Json& j) {
    RunManifest m;
    m.runId = j.at("runId").get<std::string>();
    m.params.design = designFromName(j.at("promptDesign").get<std::string>());
    m.params.backendId = j.at("backendId").get<std::string>();
    m.params.perCategory = j.at("perCategory").get<int>();
    m.params.seed = j.at("seed").get<std::uint64_t>();
    m.params.suppressMention = j.value("suppressMention", false);
    m.caseIds = j.at("caseIds").get<std::vector<std::string>>();
    for (const auto& [id, e] : j.at("perCaseStatus").items()) {
        m.status[id] = {stateFromName(e.at("state").get<std::string>()), e.value("reason", std::string()),
                        e.value("reportId", std::string())};
    }
    m.startedAt = j.value("startedAt", std::string());
    m.finishedAt = j.value("finishedAt", std::string());
    return m;
}

std::string runIdFor(const RunParams& p) {
    auto key = fmt::format("{}\x1f{}\x1f{}\x1f{}\x1f{}", designName(p.design), p.backendId, p.perCategory, p.seed,
                           p.suppressMention);
    return fmt::format("run-{:016x}", fnv1a(key));
}

std::string reportIdFor(const std::string& caseId, PromptDesign design, const std::string& backendId,
                        bool suppressMention) {
    auto key = fmt::format("{}\x1f{}\x1f{}\x1f{}", caseId, designName(design), backendId, suppressMention);
    return fmt::format("rpt-{:016x}", fnv1a(key));
}

// ---- construction / backends -------------------------------------------------

Pipeline::Pipeline(PipelineConfig config) : Pipeline(std::move(config), llm::steadyClock(), llm::realSleeper()) {}

Pipeline::Pipeline(PipelineConfig config, llm::ClockFn clock, llm::Sleeper sleeper)
    : config_(std::move(config)), throttles_(std::move(clock), std::move(sleeper)) {
    store_ = std::make_unique<RecordStore>(config_.storePath, RecordStore::Options{config_.syncOnWrite});
    labeler::Lexicon lexicon =
        config_.lexiconPath.empty() ? labeler::Lexicon::defaults() : labeler::Lexicon::load(config_.lexiconPath);
    labeler::CueSet cues = config_.cuesPath.empty() ? labeler::CueSet::defaults() : labeler::CueSet::load(config_.cuesPath);
    labeler_ = std::make_unique<labeler::Labeler>(std::move(lexicon), std::move(cues));
    for (const auto& b : config_.backends) registerBackend(llm::makeBackend(b), b);
    chat_ = std::make_unique<chat::ChatService>(
        *store_, [this](const std::string& id, const std::vector<llm::ChatTurn>& turns) { return complete(id, turns); },
        config_.chatTurnCap);
}

void Pipeline::registerBackend(std::shared_ptr<llm::ChatBackend> backend, std::optional<llm::BackendConfig> config) {
    std::lock_guard lock(backendsMutex_);
    std::string id = backend->id();
    backends_[id] = {std::move(backend), std::move(config)};
}

std::vector<std::string> Pipeline::backendIds() const {
    std::lock_guard lock(backendsMutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : backends_) out.push_back(id);
    return out;
}

Pipeline::BackendEntry Pipeline::backend(const std::string& backendId) const {
    std::lock_guard lock(backendsMutex_);
    auto it = backends_.find(backendId);
    if (it == backends_.end()) throw NotFoundError(fmt::format("backend '{}' is not configured", backendId));
    return it->second;
}

llm::CompletionResult Pipeline::complete(const std::string& backendId, const std::vector<llm::ChatTurn>& turns) {
    BackendEntry entry = backend(backendId);
    if (entry.config) {
        if (auto* throttle = throttles_.forBackend(*entry.config)) {
            throttle->acquire(config_.throttlePolicy, config_.throttleWaitBudgetSeconds);
        }
    }
    return entry.backend->complete(turns);
}

// ---- ingest ------------------------------------------------------------------

IngestResult Pipeline::ingestRows(const std::vector<Json>& rows) {
    IngestResult result;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::string caseId;
        if (rows[i].is_object() && rows[i].contains("caseId") && rows[i]["caseId"].is_string()) {
            caseId = rows[i]["caseId"].get<std::string>();
        }
        try {
            CaseRecord c = caseFromIngestRow(rows[i]);
            store_->insert(RecordKind::Case, c.caseId, c);
            result.accepted.push_back(c.caseId);
        } catch (const ConflictError& e) {
            result.rejected.push_back({i + 1, caseId, "conflict", e.what()});
        } catch (const DomainError& e) {
            result.rejected.push_back({i + 1, caseId, "schema", e.what()});
        }
    }
    return result;
}

IngestResult Pipeline::ingestJsonl(std::string_view text) {
    std::vector<Json> rows;
    IngestResult parseErrors;
    std::istringstream in{std::string(text)};
    std::size_t lineNo = 0;
    std::vector<std::size_t> rowLines;
    for (std::string line; std::getline(in, line);) {
        ++lineNo;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            parseErrors.rejected.push_back({lineNo, "", "schema", "line is not valid JSON"});
            continue;
        }
        rows.push_back(std::move(j));
        rowLines.push_back(lineNo);
    }
    IngestResult result = ingestRows(rows);
    for (auto& e : result.rejected) e.row = rowLines[e.row - 1];
    result.rejected.insert(result.rejected.end(), parseErrors.rejected.begin(), parseErrors.rejected.end());
    std::sort(result.rejected.begin(), result.rejected.end(), [](auto& a, auto& b) { return a.row < b.row; });
    return result;
}

// CSV columns: caseId, draftReport, one score column per disease key
// (cardiomegaly, ..., pleuralEffusion), and optional label columns named
// label_<key> holding status names. Empty cells mean absent.
IngestResult Pipeline::ingestCsv(std::string_view text) {
    auto table = parseCsv(text);
    if (table.empty()) return {};
    const auto& header = table.front();
    std::vector<Json> rows;
    IngestResult cellErrors;
    for (std::size_t r = 1; r < table.size(); ++r) {
        const auto& cells = table[r];
        Json row = Json::object();
        Json scores = Json::object();
        Json labels = Json::object();
        bool bad = false;
        if (cells.size() != header.size()) {
            cellErrors.rejected.push_back({r, "", "schema",
                                             fmt::format("expected {} columns, found {}", header.size(), cells.size())});
            continue;
        }
        for (std::size_t c = 0; c < header.size() && !bad; ++c) {
            const std::string& name = header[c];
            const std::string& cell = cells[c];
            if (cell.empty()) continue;
            if (name == "caseId" || name == "draftReport") {
                row[name] = cell;
            } else if (name.rfind("label_", 0) == 0) {
                labels[name.substr(6)] = cell;
            } else {
                try {
                    std::size_t used = 0;
                    double v = std::stod(cell, &used);
                    if (used != cell.size()) throw std::invalid_argument(cell);
                    scores[name] = v;
                } catch (const std::exception&) {
                    std::string id = row.contains("caseId") ? row["caseId"].get<std::string>() : std::string();
                    cellErrors.rejected.push_back(
                        {r, id, "schema", fmt::format("column '{}' is not a number: '{}'", name, cell)});
                    bad = true;
                }
            }
        }
        if (bad) continue;
        if (!scores.empty()) row["scores"] = scores;
        if (!labels.empty()) row["groundTruthLabels"] = labels;
        rows.push_back(std::move(row));
    }
    IngestResult result = ingestRows(rows);
    // Map row indices back to CSV data rows, accounting for skipped ones.
    std::vector<std::size_t> rowNumbers;
    std::set<std::size_t> skipped;
    for (const auto& e : cellErrors.rejected) skipped.insert(e.row);
    for (std::size_t r = 1; r < table.size(); ++r) {
        if (!skipped.count(r)) rowNumbers.push_back(r);
    }
    for (auto& e : result.rejected) e.row = rowNumbers[e.row - 1];
    result.rejected.insert(result.rejected.end(), cellErrors.rejected.begin(), cellErrors.rejected.end());
    std::sort(result.rejected.begin(), result.rejected.end(), [](auto& a, auto& b) { return a.row < b.row; });
    return result;
}

IngestResult Pipeline::ingestFile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    auto ext = path.extension().string();
    if (ext == ".csv") return ingestCsv(buf.str());
    return ingestJsonl(buf.str());
}

// ---- queries -----------------------------------------------------------------

CaseRecord Pipeline::getCase(const std::string& caseId) const {
    auto j = store_->get(RecordKind::Case, caseId);
    if (!j) throw NotFoundError(fmt::format("case '{}' not found", caseId));
    return j->get<CaseRecord>();
}

std::vector<CaseRecord> Pipeline::listCases() const {
    std::vector<CaseRecord> out;
    for (const auto& j : store_->list(RecordKind::Case)) out.push_back(j.get<CaseRecord>());
    return out;
}

RefinedReport Pipeline::getReport(const std::string& reportId) const {
    auto j = store_->get(RecordKind::Report, reportId);
    if (!j) throw NotFoundError(fmt::format("report '{}' not found", reportId));
    return j->get<RefinedReport>();
}

std::vector<RefinedReport> Pipeline::reportsForCase(const std::string& caseId) const {
    std::vector<RefinedReport> out;
    for (const auto& j : store_->list(RecordKind::Report)) {
        auto r = j.get<RefinedReport>();
        if (r.caseId == caseId) out.push_back(std::move(r));
    }
    return out;
}

// ---- refine ------------------------------------------------------------------

std::shared_ptr<std::mutex> Pipeline::refineLock(const std::string& reportId) {
    std::lock_guard guard(refineLocksMutex_);
    auto& slot = refineLocks_[reportId];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
}

RefineOutcome Pipeline::refineCase(const std::string& caseId, PromptDesign design, const std::string& backendId,
                                   bool suppressMention) {
    CaseRecord record = getCase(caseId);
    backend(backendId);  // fail fast on unknown backend
    std::string reportId = reportIdFor(caseId, design, backendId, suppressMention);
    auto lock = refineLock(reportId);
    std::lock_guard guard(*lock);
    if (auto stored = store_->get(RecordKind::Report, reportId)) return {stored->get<RefinedReport>(), true};

    auto bundle = bridge::composeQuery(record, design, suppressMention);
    auto result = complete(backendId, {{llm::Role::User, bundle.fullText}});

    RefinedReport report;
    report.reportId = reportId;
    report.caseId = caseId;
    report.text = result.text;
    report.promptDesign = design;
    report.suppressMention = suppressMention;
    report.backendId = backendId;
    report.rawResponse = result.rawResponse;
    report.wordCount = wordCount(report.text);
    report.createdAt = utcTimestamp();
    store_->insert(RecordKind::Report, reportId, report);
    return {report, false};
}

// ---- evaluation runs ---------------------------------------------------------

void Pipeline::saveManifest(const RunManifest& m) { store_->upsert(RecordKind::Run, m.runId, toJson(m)); }

RunManifest Pipeline::getRun(const std::string& runId) const {
    auto j = store_->get(RecordKind::Run, runId);
    if (!j) throw NotFoundError(fmt::format("run '{}' not found", runId));
    return manifestFromJson(*j);
}

std::optional<eval::EvalReport> Pipeline::getEvalReport(const std::string& runId) const {
    auto j = store_->get(RecordKind::Eval, runId);
    if (!j) return std::nullopt;
    return eval::evalReportFromJson(*j);
}

RunOutcome Pipeline::runEvaluation(const RunParams& params) {
    backend(params.backendId);
    std::lock_guard runGuard(runMutex_);
    std::string runId = runIdFor(params);

    RunManifest manifest;
    if (auto existing = store_->get(RecordKind::Run, runId)) {
        manifest = manifestFromJson(*existing);
    } else {
        std::vector<CaseRecord> pool;
        for (auto& c : listCases()) {
            if (c.groundTruthLabels) pool.push_back(std::move(c));
        }
        auto sample = eval::sampleCases(pool, params.perCategory, params.seed);
        manifest.runId = runId;
        manifest.params = params;
        manifest.startedAt = utcTimestamp();
        for (const auto& c : sample) {
            manifest.caseIds.push_back(c.caseId);
            manifest.status[c.caseId] = {};
        }
        saveManifest(manifest);
    }

    for (const auto& caseId : manifest.caseIds) {
        CaseStatus& status = manifest.status[caseId];
        if (status.state != CaseState::Pending) continue;
        try {
            auto outcome = refineCase(caseId, params.design, params.backendId, params.suppressMention);
            status = {CaseState::Done, "", outcome.report.reportId};
        } catch (const llm::LlmError& e) {
            status = {CaseState::Failed, fmt::format("{}: {}", llm::errorKindName(e.kind()), e.what()), ""};
        } catch (const DomainError& e) {
            status = {CaseState::Failed, fmt::format("invalid case: {}", e.what()), ""};
        }
        saveManifest(manifest);
    }

    std::vector<eval::EvalCase> cases;
    std::vector<std::string> failed;
    for (const auto& caseId : manifest.caseIds) {
        const CaseStatus& s = manifest.status.at(caseId);
        if (s.state == CaseState::Failed) {
            failed.push_back(caseId);
            continue;
        }
        CaseRecord c = getCase(caseId);
        if (!c.groundTruthLabels) throw DomainError(fmt::format("case '{}' has no ground-truth labels", caseId));
        RefinedReport r = getReport(s.reportId);
        cases.push_back({caseId, r.text, c.draftReport, *c.groundTruthLabels});
    }

    eval::EvalMetadata meta{std::string(designName(params.design)), params.backendId, "", params.seed};
    eval::EvalReport report = eval::evaluate(cases, *labeler_, config_.uncertainPolicy, meta, config_.lengthBuckets);
    report.failedCaseIds = std::move(failed);

    if (manifest.finishedAt.empty()) manifest.finishedAt = utcTimestamp();
    saveManifest(manifest);
    store_->upsert(RecordKind::Eval, runId, eval::toJson(report));
    return {manifest, report};
}

}  // namespace chatcad
