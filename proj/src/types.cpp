#include "chatcad/types.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>

#include <fmt/format.h>

namespace chatcad {

namespace {

struct ObservationNames {
    std::string_view display;
    std::string_view key;
};

constexpr std::array<ObservationNames, 6> kObservationNames = {{
    {"Cardiomegaly", "cardiomegaly"},
    {"Edema", "edema"},
    {"Consolidation", "consolidation"},
    {"Atelectasis", "atelectasis"},
    {"Pleural Effusion", "pleuralEffusion"},
    {"No Finding", "noFinding"},
}};

struct GradeNames {
    std::string_view name;
    std::string_view phrase;
    GradeInterval interval;
};

constexpr std::array<GradeNames, 4> kGrades = {{
    {"NoSign", "No sign", {0.0, 0.2, false}},
    {"SmallPossibility", "Small possibility", {0.2, 0.5, false}},
    {"Likely", "Likely", {0.5, 0.9, false}},
    {"Definitely", "Definitely", {0.9, 1.0, true}},
}};

constexpr std::array<std::string_view, 4> kStatusNames = {"Positive", "Negative", "Uncertain",
                                                         "NotMentioned"};

void checkProbability(double v, std::string_view what) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError(fmt::format("{} must lie in [0, 1], got {}", what, v));
    }
}

const Json& requireField(const Json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw DomainError(fmt::format("missing field '{}'", name));
    return *it;
}

std::string requireString(const Json& j, const char* name) {
    const Json& v = requireField(j, name);
    if (!v.is_string()) throw DomainError(fmt::format("field '{}' must be a string", name));
    return v.get<std::string>();
}

}  // namespace

std::string_view displayName(Observation o) { return kObservationNames.at(indexOf(o)).display; }

std::string_view jsonKey(Observation o) { return kObservationNames.at(indexOf(o)).key; }

Observation observationFromKey(std::string_view key) {
    for (std::size_t i = 0; i < kObservationNames.size(); ++i) {
        if (kObservationNames[i].key == key) return static_cast<Observation>(i);
    }
    throw DomainError(fmt::format("unknown observation '{}'", key));
}

DiagnosisScores::DiagnosisScores(const std::array<double, kDiseaseCount>& values) : values_(values) {
    for (auto d : kDiseases) checkProbability(values_[indexOf(d)], fmt::format("{} score", displayName(d)));
}

DiagnosisScores DiagnosisScores::uniform(double value) {
    std::array<double, kDiseaseCount> v;
    v.fill(value);
    return DiagnosisScores(v);
}

SeverityGrade gradeOf(double score) {
    checkProbability(score, "score");
    if (score < 0.2) return SeverityGrade::NoSign;
    if (score < 0.5) return SeverityGrade::SmallPossibility;
    if (score < 0.9) return SeverityGrade::Likely;
    return SeverityGrade::Definitely;
}

GradeInterval gradeInterval(SeverityGrade g) { return kGrades.at(static_cast<std::size_t>(g)).interval; }
std::string_view gradeName(SeverityGrade g) { return kGrades.at(static_cast<std::size_t>(g)).name; }
std::string_view gradePhrase(SeverityGrade g) { return kGrades.at(static_cast<std::size_t>(g)).phrase; }

SeverityGrade gradeFromName(std::string_view name) {
    for (std::size_t i = 0; i < kGrades.size(); ++i) {
        if (kGrades[i].name == name) return static_cast<SeverityGrade>(i);
    }
    throw DomainError(fmt::format("unknown severity grade '{}'", name));
}

void SegmentationSummary::validate() const {
    if (region.empty()) throw DomainError("segmentation region must be non-empty");
    checkProbability(areaFraction, "segmentation areaFraction");
}

std::string_view statusName(LabelStatus s) { return kStatusNames.at(static_cast<std::size_t>(s)); }

LabelStatus statusFromName(std::string_view name) {
    for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
        if (kStatusNames[i] == name) return static_cast<LabelStatus>(i);
    }
    throw DomainError(fmt::format("unknown label status '{}'", name));
}

bool LabelSet::noFinding() const {
    for (auto s : statuses_) {
        if (s == LabelStatus::Positive || s == LabelStatus::Uncertain) return false;
    }
    return true;
}

std::string_view designName(PromptDesign d) {
    switch (d) {
        case PromptDesign::P1: return "P1";
        case PromptDesign::P2: return "P2";
        case PromptDesign::P3: return "P3";
    }
    return "P3";
}

PromptDesign designFromName(std::string_view n) {
    if (n == "P1" || n == "p1") return PromptDesign::P1;
    if (n == "P2" || n == "p2") return PromptDesign::P2;
    if (n == "P3" || n == "p3") return PromptDesign::P3;
    throw DomainError(fmt::format("unknown prompt design '{}'", n));
}

void CaseRecord::validate() const {
    if (caseId.empty()) throw DomainError("caseId must be non-empty");
    if (!hasDraftReport() && !scores) {
        throw DomainError(fmt::format("case '{}' has neither a draft report nor classifier scores", caseId));
    }
    for (const auto& s : segmentation) s.validate();
}

std::size_t wordCount(std::string_view text) {
    std::size_t count = 0;
    bool inWord = false;
    for (char c : text) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !inWord) ++count;
        inWord = !space;
    }
    return count;
}

std::string utcTimestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---- JSON -----------------------------------------------------------------

void to_json(Json& j, const DiagnosisScores& s) {
    j = Json::object();
    for (auto d : kDiseases) j[std::string(jsonKey(d))] = s[d];
}

void from_json(const Json& j, DiagnosisScores& s) {
    if (!j.is_object()) throw DomainError("scores must be an object");
    std::array<double, kDiseaseCount> v{};
    for (auto d : kDiseases) {
        const Json& e = requireField(j, std::string(jsonKey(d)).c_str());
        if (!e.is_number()) throw DomainError(fmt::format("score '{}' must be a number", jsonKey(d)));
        v[indexOf(d)] = e.get<double>();
    }
    if (j.size() != kDiseaseCount) throw DomainError("scores must contain exactly the five target diseases");
    s = DiagnosisScores(v);
}

void to_json(Json& j, const SegmentationSummary& s) {
    j = Json{{"region", s.region}, {"areaFraction", s.areaFraction}, {"finding", s.finding}};
}

void from_json(const Json& j, SegmentationSummary& s) {
    if (!j.is_object()) throw DomainError("segmentation entry must be an object");
    s.region = requireString(j, "region");
    const Json& a = requireField(j, "areaFraction");
    if (!a.is_number()) throw DomainError("areaFraction must be a number");
    s.areaFraction = a.get<double>();
    s.finding = j.contains("finding") ? requireString(j, "finding") : std::string();
    s.validate();
}

void to_json(Json& j, const LabelSet& l) {
    j = Json::object();
    for (auto d : kDiseases) j[std::string(jsonKey(d))] = std::string(statusName(l[d]));
    j["noFinding"] = l.noFinding();
}

void from_json(const Json& j, LabelSet& l) {
    if (!j.is_object()) throw DomainError("labels must be an object");
    LabelSet out;
    for (auto d : kDiseases) {
        auto it = j.find(std::string(jsonKey(d)));
        if (it == j.end()) continue;  // absent means NotMentioned
        if (!it->is_string()) throw DomainError(fmt::format("label '{}' must be a string", jsonKey(d)));
        out.set(d, statusFromName(it->get<std::string>()));
    }
    if (auto it = j.find("noFinding"); it != j.end()) {
        if (!it->is_boolean() || it->get<bool>() != out.noFinding()) {
            throw DomainError("noFinding flag is inconsistent with the per-disease statuses");
        }
    }
    l = out;
}

void to_json(Json& j, const CaseRecord& c) {
    j = Json::object();
    j["caseId"] = c.caseId;
    if (c.draftReport) j["draftReport"] = *c.draftReport;
    if (c.scores) j["scores"] = *c.scores;
    j["segmentation"] = c.segmentation;
    if (c.groundTruthLabels) j["groundTruthLabels"] = *c.groundTruthLabels;
    j["createdAt"] = c.createdAt;
}

void from_json(const Json& j, CaseRecord& c) {
    if (!j.is_object()) throw DomainError("case record must be an object");
    CaseRecord out;
    out.caseId = requireString(j, "caseId");
    if (auto it = j.find("draftReport"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw DomainError("draftReport must be a string");
        out.draftReport = it->get<std::string>();
    }
    if (auto it = j.find("scores"); it != j.end() && !it->is_null()) out.scores = it->get<DiagnosisScores>();
    if (auto it = j.find("segmentation"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw DomainError("segmentation must be an array");
        for (const auto& e : *it) out.segmentation.push_back(e.get<SegmentationSummary>());
    }
    if (auto it = j.find("groundTruthLabels"); it != j.end() && !it->is_null()) {
        out.groundTruthLabels = it->get<LabelSet>();
    }
    if (auto it = j.find("createdAt"); it != j.end() && it->is_string()) out.createdAt = it->get<std::string>();
    out.validate();
    c = std::move(out);
}

void to_json(Json& j, const RefinedReport& r) {
    j = Json{{"reportId", r.reportId},
             {"caseId", r.caseId},
             {"text", r.text},
             {"promptDesign", std::string(designName(r.promptDesign))},
             {"suppressMention", r.suppressMention},
             {"backendId", r.backendId},
             {"rawResponse", r.rawResponse},
             {"wordCount", r.wordCount},
             {"createdAt", r.createdAt}};
}

void from_json(const Json& j, RefinedReport& r) {
    RefinedReport out;
    out.reportId = requireString(j, "reportId");
    out.caseId = requireString(j, "caseId");
    out.text = requireString(j, "text");
    out.promptDesign = designFromName(requireString(j, "promptDesign"));
    out.suppressMention = j.value("suppressMention", false);
    out.backendId = requireString(j, "backendId");
    out.rawResponse = j.value("rawResponse", std::string());
    out.wordCount = wordCount(out.text);
    if (j.contains("wordCount") && j["wordCount"].get<std::size_t>() != out.wordCount) {
        throw DomainError("wordCount does not match report text");
    }
    out.createdAt = j.value("createdAt", std::string());
    r = std::move(out);
}

}  // namespace chatcad
