#include "chatcad/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <fmt/format.h>

namespace chatcad::bridge {

std::string renderP1(const DiagnosisScores& scores) {
    std::string out(kScoreRule);
    for (auto d : kDiseases) out += fmt::format("\n{} score: {:.2f}", displayName(d), scores[d]);
    return out;
}

std::string gradeClause(SeverityGrade grade, Observation disease) {
    switch (grade) {
        case SeverityGrade::NoSign: return fmt::format("No sign of {}.", displayName(disease));
        case SeverityGrade::SmallPossibility: return fmt::format("Small possibility of {}.", displayName(disease));
        case SeverityGrade::Likely: return fmt::format("Likely {}.", displayName(disease));
        case SeverityGrade::Definitely: return fmt::format("Definitely {}.", displayName(disease));
    }
    return {};
}

std::string renderP2(const DiagnosisScores& scores) {
    std::string out;
    for (auto d : kDiseases) {
        if (!out.empty()) out += '\n';
        out += gradeClause(gradeOf(scores[d]), d);
    }
    return out;
}

std::string renderP3(const DiagnosisScores& scores, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw DomainError(fmt::format("threshold must lie in (0, 1), got {}", threshold));
    }
    std::vector<std::string_view> names;
    for (auto d : kDiseases) {
        if (scores[d] > threshold) names.push_back(displayName(d));
    }
    if (names.empty()) return std::string(kNoFinding);
    return fmt::format("Network diagnosis: {}.", fmt::join(names, ", "));
}

std::string renderScores(const DiagnosisScores& scores, PromptDesign design) {
    switch (design) {
        case PromptDesign::P1: return renderP1(scores);
        case PromptDesign::P2: return renderP2(scores);
        case PromptDesign::P3: return renderP3(scores);
    }
    return {};
}

int coveragePercent(double areaFraction) {
    if (!(areaFraction >= 0.0 && areaFraction <= 1.0)) {
        throw DomainError(fmt::format("areaFraction must lie in [0, 1], got {}", areaFraction));
    }
    // Snap away binary noise (0.145 * 100 == 14.499999...) before rounding.
    double scaled = std::round(areaFraction * 100.0 * 1e9) / 1e9;
    int pct = static_cast<int>(std::round(scaled));
    if (areaFraction > 0.0 && pct < 1) pct = 1;
    return pct;
}

std::string renderSegmentation(std::vector<SegmentationSummary> summaries) {
    std::sort(summaries.begin(), summaries.end(), [](const auto& a, const auto& b) {
        return std::tie(a.region, a.finding, a.areaFraction) < std::tie(b.region, b.finding, b.areaFraction);
    });
    std::string out;
    for (const auto& s : summaries) {
        s.validate();
        if (!out.empty()) out += '\n';
        out += fmt::format("Segmentation finds {} in the {}, covering approximately {}% of the region.",
                           s.finding, s.region, coveragePercent(s.areaFraction));
    }
    return out;
}

std::string joinLabels(const std::vector<std::string>& labels) {
    if (labels.empty()) return {};
    if (labels.size() == 1) return labels.front();
    std::string out;
    for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
        if (i > 0) out += ", ";
        out += labels[i];
    }
    return out + " and " + labels.back();
}

std::string revisionInstruction(const std::vector<std::string>& labels, bool suppressMention) {
    std::string joined = joinLabels(labels);
    std::string out = "Revise the report based on results from " + joined;
    if (suppressMention) return out + " but without mentioning " + joined;
    return out + ".";
}

std::string renderNetworks(const std::vector<NetworkDescription>& networks) {
    std::string out;
    for (const auto& n : networks) {
        if (!out.empty()) out += "\n\n";
        out += fmt::format("{} ({}):\n{}", n.label, n.role, n.description);
    }
    return out;
}

std::string PromptBundle::render() const {
    std::vector<std::string> parts;
    if (!systemRule.empty()) parts.push_back(systemRule);
    if (!networkDescriptions.empty()) parts.push_back(renderNetworks(networkDescriptions));
    parts.push_back(instruction);
    std::string out = fmt::format("{}", fmt::join(parts, "\n\n"));
    while (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

PromptBundle composeQuery(const CaseRecord& record, PromptDesign design, bool suppressMention) {
    PromptBundle bundle;
    bundle.systemRule = std::string(kFramingRule);
    bundle.suppressNetworkMention = suppressMention;
    if (record.scores) {
        bundle.networkDescriptions.push_back(
            {std::string(kClassifierLabel), "disease classifier", renderScores(*record.scores, design)});
    }
    if (!record.segmentation.empty()) {
        bundle.networkDescriptions.push_back(
            {std::string(kSegmentationLabel), "lesion segmentation", renderSegmentation(record.segmentation)});
    }
    if (record.hasDraftReport()) {
        bundle.networkDescriptions.push_back({std::string(kReportLabel), "report generation", *record.draftReport});
    }
    if (bundle.networkDescriptions.empty()) {
        throw DomainError(fmt::format("case '{}' has no draft report and no model outputs", record.caseId));
    }
    std::vector<std::string> labels;
    for (const auto& n : bundle.networkDescriptions) labels.push_back(n.label);
    bundle.instruction = revisionInstruction(labels, suppressMention);
    bundle.fullText = bundle.render();
    return bundle;
}

}  // namespace chatcad::bridge
