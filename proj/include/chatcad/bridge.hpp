#pragma once

// Tensor-to-text bridge: renders classifier scores and segmentation outputs as
// prompt text and assembles the revision query sent to the language model.

#include <string>
#include <utility>
#include <vector>

#include "chatcad/types.hpp"

namespace chatcad::bridge {

inline constexpr std::string_view kScoreRule = "Higher disease score means higher possibility of illness.";
inline constexpr std::string_view kNoFinding = "No Finding";
inline constexpr std::string_view kFramingRule =
    "The following are outputs of computer-aided diagnosis networks for one chest X-ray exam.";
inline constexpr double kDefaultThreshold = 0.5;

// Raw-score listing: rule sentence, then "<Disease> score: 0.87" per disease.
std::string renderP1(const DiagnosisScores& scores);

// One graded clause per disease: "No sign of X." / "Small possibility of X." /
// "Likely X." / "Definitely X."
std::string renderP2(const DiagnosisScores& scores);
std::string gradeClause(SeverityGrade grade, Observation disease);

// Diseases strictly above threshold, or exactly "No Finding".
std::string renderP3(const DiagnosisScores& scores, double threshold = kDefaultThreshold);

std::string renderScores(const DiagnosisScores& scores, PromptDesign design);

// Percent of region covered, rounded half away from zero, never below 1 when
// the fraction is positive.
int coveragePercent(double areaFraction);

// Sentences are ordered by region (then finding, then area) so input order
// does not matter.
std::string renderSegmentation(std::vector<SegmentationSummary> summaries);

struct NetworkDescription {
    std::string label;  // "Network A"
    std::string role;   // "disease classifier"
    std::string description;

    bool operator==(const NetworkDescription&) const = default;
};

struct PromptBundle {
    std::string systemRule;
    std::vector<NetworkDescription> networkDescriptions;
    std::string instruction;
    bool suppressNetworkMention = false;
    std::string fullText;

    // Re-derives fullText from the other fields.
    std::string render() const;
};

// Fixed role labels: classifier = A, segmentation = B, draft report = C.
inline constexpr std::string_view kClassifierLabel = "Network A";
inline constexpr std::string_view kSegmentationLabel = "Network B";
inline constexpr std::string_view kReportLabel = "Network C";

// "Network A", "Network A and Network C", "Network A, Network B and Network C".
std::string joinLabels(const std::vector<std::string>& labels);

std::string revisionInstruction(const std::vector<std::string>& labels, bool suppressMention);

PromptBundle composeQuery(const CaseRecord& record, PromptDesign design, bool suppressMention);

// Only the network descriptions, as they appear inside fullText.
std::string renderNetworks(const std::vector<NetworkDescription>& networks);

}  // namespace chatcad::bridge
