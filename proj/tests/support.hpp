#pragma once

// Shared helpers for the unit and acceptance suites: fixture paths, scratch
// directories, fake transports and backends, synthetic case pools, and
// brute-force recount oracles.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "chatcad/eval.hpp"
#include "chatcad/llm.hpp"
#include "chatcad/pipeline.hpp"
#include "chatcad/types.hpp"

namespace chatcad::testing {

inline std::filesystem::path fixtureDir() { return CHATCAD_TEST_FIXTURES; }
inline std::filesystem::path dataDir() { return CHATCAD_DATA_DIR; }

inline std::string readText(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<Json> readJsonl(const std::filesystem::path& p) {
    std::vector<Json> out;
    std::istringstream in(readText(p));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(Json::parse(line));
    }
    return out;
}

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "chatcad-XXXXXX").string();
        path_ = mkdtemp(tmpl.data());
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Replays canned HTTP responses; a response with status 0 simulates a
// transport failure. Records every request.
class FakeTransport final : public llm::Transport {
public:
    explicit FakeTransport(std::deque<llm::HttpResponse> script) : script_(std::move(script)) {}

    llm::HttpResponse post(const llm::HttpRequest& request) override {
        requests.push_back(request);
        if (script_.empty()) throw llm::LlmError(llm::ErrorKind::Retryable, "script exhausted");
        auto r = script_.front();
        script_.pop_front();
        if (r.status == 0) throw llm::LlmError(llm::ErrorKind::Retryable, "connection reset");
        return r;
    }

    std::vector<llm::HttpRequest> requests;

private:
    std::deque<llm::HttpResponse> script_;
};

inline std::string okBody(const std::string& text) {
    return Json{{"id", "cmpl-1"},
                {"choices", Json::array({{{"index", 0},
                                          {"message", {{"role", "assistant"}, {"content", text}}},
                                          {"finish_reason", "stop"}}})},
                {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 7}}}}
        .dump();
}

// Wraps a backend and simulates a process crash after `budget` calls by
// throwing something the pipeline does not treat as a per-case failure.
class CrashingBackend final : public llm::ChatBackend {
public:
    struct Crash : std::runtime_error {
        Crash() : std::runtime_error("simulated crash") {}
    };

    CrashingBackend(std::shared_ptr<llm::ChatBackend> inner, int budget) : inner_(std::move(inner)), budget_(budget) {}

    const std::string& id() const override { return inner_->id(); }
    llm::CompletionResult complete(const std::vector<llm::ChatTurn>& turns) override {
        if (budget_ >= 0 && calls.load() >= budget_) throw Crash();
        ++calls;
        return inner_->complete(turns);
    }

    std::atomic<int> calls{0};

private:
    std::shared_ptr<llm::ChatBackend> inner_;
    int budget_;
};

// Counts calls and keeps the prompts it saw.
class RecordingBackend final : public llm::ChatBackend {
public:
    explicit RecordingBackend(std::shared_ptr<llm::ChatBackend> inner) : inner_(std::move(inner)) {}

    const std::string& id() const override { return inner_->id(); }
    llm::CompletionResult complete(const std::vector<llm::ChatTurn>& turns) override {
        seen.push_back(turns);
        return inner_->complete(turns);
    }

    std::vector<std::vector<llm::ChatTurn>> seen;

private:
    std::shared_ptr<llm::ChatBackend> inner_;
};

// `each` cases positive for exactly one disease per disease, plus `each`
// no-finding cases. Scores agree with the ground truth.
inline std::vector<Json> syntheticPool(int each, std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> low(0.01, 0.45), high(0.55, 0.99);
    std::vector<Json> rows;
    int id = 0;
    for (std::size_t cat = 0; cat <= kDiseaseCount; ++cat) {
        for (int k = 0; k < each; ++k) {
            Json scores, labels;
            for (std::size_t d = 0; d < kDiseaseCount; ++d) {
                auto key = std::string(jsonKey(kDiseases[d]));
                bool pos = d == cat;
                scores[key] = std::round((pos ? high(rng) : low(rng)) * 100.0) / 100.0;
                labels[key] = pos ? "Positive" : "NotMentioned";
            }
            std::string draft = cat < kDiseaseCount
                                    ? "Portable chest radiograph. Findings of " +
                                          std::string(displayName(kDiseases[cat])) + " are noted."
                                    : "Portable chest radiograph. The lungs are clear.";
            char buf[16];
            std::snprintf(buf, sizeof buf, "syn-%03d", ++id);
            rows.push_back({{"caseId", buf}, {"draftReport", draft}, {"scores", scores}, {"groundTruthLabels", labels}});
        }
    }
    return rows;
}

// ---- brute-force oracles ------------------------------------------------------

// Recount each cell by testing the four cases separately.
inline eval::ConfusionCounts bruteConfusion(const std::vector<eval::BinaryLabels>& pred,
                                            const std::vector<eval::BinaryLabels>& truth) {
    eval::ConfusionCounts c;
    c.n = static_cast<std::int64_t>(pred.size());
    for (std::size_t d = 0; d < kDiseaseCount; ++d) {
        auto& k = c.perObservation[d];
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i][d] && truth[i][d]) k.tp++;
        }
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i][d] && !truth[i][d]) k.fp++;
        }
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (!pred[i][d] && truth[i][d]) k.fn++;
        }
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (!pred[i][d] && !truth[i][d]) k.tn++;
        }
    }
    return c;
}

// F1 from counts directly: 2tp / (2tp + fp + fn).
inline double bruteF1(const eval::Counts& k) {
    long double den = 2.0L * k.tp + k.fp + k.fn;
    return den == 0 ? 0.0 : static_cast<double>(2.0L * k.tp / den);
}

inline double brutePrecision(const eval::Counts& k) {
    return k.tp + k.fp == 0 ? 0.0 : static_cast<double>(static_cast<long double>(k.tp) / (k.tp + k.fp));
}

inline double bruteRecall(const eval::Counts& k) {
    return k.tp + k.fn == 0 ? 0.0 : static_cast<double>(static_cast<long double>(k.tp) / (k.tp + k.fn));
}

inline std::size_t bruteWordCount(const std::string& text) {
    std::istringstream in(text);
    std::size_t n = 0;
    for (std::string w; in >> w;) ++n;
    return n;
}

// Linear scan over explicit [lo, hi) intervals.
inline std::vector<std::int64_t> bruteHistogram(const std::vector<std::string>& texts,
                                                const std::vector<std::size_t>& bounds) {
    std::vector<std::int64_t> h(bounds.size() + 1, 0);
    for (const auto& t : texts) {
        std::size_t wc = bruteWordCount(t);
        std::size_t lo = 0;
        bool placed = false;
        for (std::size_t b = 0; b < bounds.size(); ++b) {
            if (wc >= lo && wc < bounds[b]) {
                h[b]++;
                placed = true;
                break;
            }
            lo = bounds[b];
        }
        if (!placed) h.back()++;
    }
    return h;
}

}  // namespace chatcad::testing
