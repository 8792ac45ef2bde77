#pragma once

// Shared domain vocabulary: target observations, classifier scores, severity
// grades, labels, cases and refined reports, plus their canonical JSON form.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace chatcad {

using Json = nlohmann::json;

// Invalid input or violated precondition.
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConflictError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The five target chest findings in canonical order. NoFinding only appears in
// labeling and sampling contexts, never as a score entry.
enum class Observation : std::uint8_t {
    Cardiomegaly,
    Edema,
    Consolidation,
    Atelectasis,
    PleuralEffusion,
    NoFinding,
};

inline constexpr std::size_t kDiseaseCount = 5;

inline constexpr std::array<Observation, kDiseaseCount> kDiseases = {
    Observation::Cardiomegaly, Observation::Edema, Observation::Consolidation,
    Observation::Atelectasis, Observation::PleuralEffusion,
};

constexpr std::size_t indexOf(Observation o) { return static_cast<std::size_t>(o); }

// "Pleural Effusion", "No Finding", ...
std::string_view displayName(Observation o);
// lowerCamelCase key used in JSON objects: "pleuralEffusion".
std::string_view jsonKey(Observation o);
// Accepts jsonKey spellings; throws DomainError otherwise.
Observation observationFromKey(std::string_view key);

// One probability per disease, each in [0, 1].
class DiagnosisScores {
public:
    DiagnosisScores() = default;
    explicit DiagnosisScores(const std::array<double, kDiseaseCount>& values);

    static DiagnosisScores uniform(double value);

    double operator[](Observation o) const { return values_.at(indexOf(o)); }
    const std::array<double, kDiseaseCount>& values() const { return values_; }

    bool operator==(const DiagnosisScores&) const = default;

private:
    std::array<double, kDiseaseCount> values_{};
};

enum class SeverityGrade : std::uint8_t { NoSign, SmallPossibility, Likely, Definitely };

struct GradeInterval {
    double lower;
    double upper;
    bool upperClosed;

    bool contains(double s) const { return s >= lower && (upperClosed ? s <= upper : s < upper); }
};

// Half-open buckets [0,0.2) [0.2,0.5) [0.5,0.9) and the closed top [0.9,1].
SeverityGrade gradeOf(double score);
GradeInterval gradeInterval(SeverityGrade g);
std::string_view gradeName(SeverityGrade g);    // "SmallPossibility"
std::string_view gradePhrase(SeverityGrade g);  // "Small possibility"
SeverityGrade gradeFromName(std::string_view name);

struct SegmentationSummary {
    std::string region;
    double areaFraction = 0.0;
    std::string finding;

    void validate() const;
    bool operator==(const SegmentationSummary&) const = default;
};

enum class LabelStatus : std::uint8_t { Positive, Negative, Uncertain, NotMentioned };

std::string_view statusName(LabelStatus s);
LabelStatus statusFromName(std::string_view name);

class LabelSet {
public:
    LabelSet() { statuses_.fill(LabelStatus::NotMentioned); }
    explicit LabelSet(const std::array<LabelStatus, kDiseaseCount>& statuses) : statuses_(statuses) {}

    LabelStatus operator[](Observation o) const { return statuses_.at(indexOf(o)); }
    void set(Observation o, LabelStatus s) { statuses_.at(indexOf(o)) = s; }
    const std::array<LabelStatus, kDiseaseCount>& statuses() const { return statuses_; }

    // True iff every disease is Negative or NotMentioned.
    bool noFinding() const;

    bool operator==(const LabelSet&) const = default;

private:
    std::array<LabelStatus, kDiseaseCount> statuses_{};
};

enum class PromptDesign : std::uint8_t { P1, P2, P3 };

std::string_view designName(PromptDesign d);     // "P1"
PromptDesign designFromName(std::string_view n);  // accepts "P1" or "p1"

struct CaseRecord {
    std::string caseId;
    std::optional<std::string> draftReport;
    std::optional<DiagnosisScores> scores;
    std::vector<SegmentationSummary> segmentation;
    std::optional<LabelSet> groundTruthLabels;
    std::string createdAt;

    bool hasDraftReport() const { return draftReport.has_value() && !draftReport->empty(); }
    void validate() const;
    bool operator==(const CaseRecord&) const = default;
};

struct RefinedReport {
    std::string reportId;
    std::string caseId;
    std::string text;
    PromptDesign promptDesign = PromptDesign::P3;
    bool suppressMention = false;
    std::string backendId;
    std::string rawResponse;
    std::size_t wordCount = 0;
    std::string createdAt;

    bool operator==(const RefinedReport&) const = default;
};

// Number of maximal non-whitespace runs.
std::size_t wordCount(std::string_view text);

// UTC, second resolution, "2026-03-01T12:00:00Z".
std::string utcTimestamp();

void to_json(Json& j, const DiagnosisScores& s);
void from_json(const Json& j, DiagnosisScores& s);
void to_json(Json& j, const SegmentationSummary& s);
void from_json(const Json& j, SegmentationSummary& s);
void to_json(Json& j, const LabelSet& l);
void from_json(const Json& j, LabelSet& l);
void to_json(Json& j, const CaseRecord& c);
void from_json(const Json& j, CaseRecord& c);
void to_json(Json& j, const RefinedReport& r);
void from_json(const Json& j, RefinedReport& r);

}  // namespace chatcad
