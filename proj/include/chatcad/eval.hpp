#pragma once

// Multi-label diagnostic evaluation: confusion counts, precision/recall/F1
// with macro averages, stratified case sampling, length statistics and BLEU.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chatcad/labeler.hpp"
#include "chatcad/types.hpp"

namespace chatcad::eval {

using labeler::BinaryLabels;

struct Counts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
    bool operator==(const Counts&) const = default;
};

struct ConfusionCounts {
    std::array<Counts, kDiseaseCount> perObservation{};
    std::int64_t n = 0;

    const Counts& operator[](Observation o) const { return perObservation.at(indexOf(o)); }
    bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const std::vector<BinaryLabels>& predicted, const std::vector<BinaryLabels>& truth);

struct Metric {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false;  // some ratio was 0/0 and was reported as 0

    bool operator==(const Metric&) const = default;
};

struct Metrics {
    std::array<Metric, kDiseaseCount> perObservation{};
    Metric macro;  // unweighted mean of the five observations

    const Metric& operator[](Observation o) const { return perObservation.at(indexOf(o)); }
    bool operator==(const Metrics&) const = default;
};

// Harmonic mean; 0 when both inputs are 0.
double f1Score(double precision, double recall);

Metrics prf1(const ConfusionCounts& counts);

// Six categories in order: the five diseases (Positive) then NoFinding. Each
// case lands in the first category that draws it and appears at most once.
std::vector<CaseRecord> sampleCases(const std::vector<CaseRecord>& pool, int perCategory, std::uint64_t seed);

inline const std::vector<std::size_t> kDefaultLengthBuckets = {10, 20, 40, 80, 160};

struct LengthBucket {
    std::size_t lower = 0;
    std::optional<std::size_t> upper;  // exclusive; open-ended when absent
    std::int64_t count = 0;

    bool operator==(const LengthBucket&) const = default;
};

struct LengthStats {
    std::vector<LengthBucket> histogram;
    double emptyReportFraction = 0.0;
    std::int64_t n = 0;
    double meanWordCount = 0.0;

    bool operator==(const LengthStats&) const = default;
};

// Frozen list of replies treated as carrying no meaningful content.
const std::vector<std::string>& noContentPhrases();
bool isEmptyReport(const std::string& text);

LengthStats lengthStats(const std::vector<RefinedReport>& reports,
                        const std::vector<std::size_t>& boundaries = kDefaultLengthBuckets);

// Single-candidate BLEU-4: clipped n-gram precisions (n = 1..4), uniform
// weights, brevity penalty against the closest reference length. Lowercased
// whitespace tokens, no smoothing.
double bleu4(const std::string& candidate, const std::vector<std::string>& references);

// Corpus BLEU-4: n-gram statistics summed over all pairs before combining.
double corpusBleu4(const std::vector<std::string>& candidates,
                   const std::vector<std::vector<std::string>>& references);

struct EvalMetadata {
    std::string promptDesign;
    std::string backendId;
    std::string uncertainPolicy;
    std::uint64_t seed = 0;
};

struct EvalReport {
    Metrics metrics;
    ConfusionCounts counts;
    std::int64_t n = 0;
    LengthStats lengths;
    std::optional<double> bleu4;
    EvalMetadata metadata;
    // Metrics under the other uncertain policy, present only when they differ.
    std::optional<Metrics> alternatePolicyMetrics;
    std::vector<std::string> failedCaseIds;
};

Json toJson(const Metrics& m);
Json toJson(const LengthStats& s);
Json toJson(const EvalReport& r);
EvalReport evalReportFromJson(const Json& j);

// Observation rows with PR / RC / F1 columns and an Average row.
std::string formatTable(const Metrics& m);

struct EvalCase {
    std::string caseId;
    std::string refinedReport;
    std::optional<std::string> draftReport;
    LabelSet groundTruth;
};

// Labels refined reports and scores them against ground truth under `policy`,
// also reporting the other policy when it disagrees.
EvalReport evaluate(const std::vector<EvalCase>& cases, const labeler::Labeler& labeler, labeler::UncertainPolicy policy,
                    EvalMetadata metadata, const std::vector<std::size_t>& boundaries = kDefaultLengthBuckets);

}  // namespace chatcad::eval
