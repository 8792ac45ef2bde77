#include "chatcad/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace chatcad::eval {

ConfusionCounts confusion(const std::vector<BinaryLabels>& predicted, const std::vector<BinaryLabels>& truth) {
    if (predicted.size() != truth.size()) {
        throw DomainError(fmt::format("prediction count {} does not match truth count {}", predicted.size(), truth.size()));
    }
    ConfusionCounts c;
    c.n = static_cast<std::int64_t>(predicted.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        for (std::size_t d = 0; d < kDiseaseCount; ++d) {
            Counts& k = c.perObservation[d];
            bool p = predicted[i][d];
            bool t = truth[i][d];
            if (p && t) ++k.tp;
            else if (p) ++k.fp;
            else if (t) ++k.fn;
            else ++k.tn;
        }
    }
    return c;
}

double f1Score(double precision, double recall) {
    double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

Metrics prf1(const ConfusionCounts& counts) {
    Metrics m;
    auto ratio = [](std::int64_t num, std::int64_t den, bool& degenerate) {
        if (den == 0) {
            degenerate = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    double sumP = 0.0, sumR = 0.0, sumF = 0.0;
    for (std::size_t d = 0; d < kDiseaseCount; ++d) {
        const Counts& k = counts.perObservation[d];
        Metric& out = m.perObservation[d];
        out.precision = ratio(k.tp, k.tp + k.fp, out.degenerate);
        out.recall = ratio(k.tp, k.tp + k.fn, out.degenerate);
        if (out.precision + out.recall == 0.0) out.degenerate = true;
        out.f1 = f1Score(out.precision, out.recall);
        sumP += out.precision;
        sumR += out.recall;
        sumF += out.f1;
        m.macro.degenerate |= out.degenerate;
    }
    m.macro.precision = sumP / kDiseaseCount;
    m.macro.recall = sumR / kDiseaseCount;
    m.macro.f1 = sumF / kDiseaseCount;
    return m;
}

namespace {

// Uniform in [0, bound) by rejection; engine output is fully specified, unlike
// std::uniform_int_distribution, so selections are portable.
std::uint64_t uniformBelow(std::mt19937_64& rng, std::uint64_t bound) {
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        std::uint64_t v = rng();
        if (v < limit) return v % bound;
    }
}

bool inCategory(const LabelSet& labels, std::size_t category) {
    if (category < kDiseaseCount) return labels.statuses()[category] == LabelStatus::Positive;
    return labels.noFinding();
}

}  // namespace

std::vector<CaseRecord> sampleCases(const std::vector<CaseRecord>& pool, int perCategory, std::uint64_t seed) {
    if (perCategory < 1) throw DomainError(fmt::format("perCategory must be >= 1, got {}", perCategory));
    std::vector<const CaseRecord*> ordered;
    for (const auto& c : pool) {
        if (!c.groundTruthLabels) {
            throw DomainError(fmt::format("case '{}' has no ground-truth labels", c.caseId));
        }
        ordered.push_back(&c);
    }
    // Pool order must not influence the draw.
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->caseId < b->caseId; });

    std::mt19937_64 rng(seed);
    std::vector<bool> taken(ordered.size(), false);
    std::vector<CaseRecord> out;
    for (std::size_t category = 0; category <= kDiseaseCount; ++category) {
        std::vector<std::size_t> eligible;
        for (std::size_t i = 0; i < ordered.size(); ++i) {
            if (!taken[i] && inCategory(*ordered[i]->groundTruthLabels, category)) eligible.push_back(i);
        }
        auto need = static_cast<std::size_t>(perCategory);
        if (eligible.size() < need) {
            std::string_view name = category < kDiseaseCount ? displayName(kDiseases[category]) : "No Finding";
            throw DomainError(fmt::format("insufficient pool for category {}: {} eligible cases, {} required", name,
                                          eligible.size(), need));
        }
        for (std::size_t k = 0; k < need; ++k) {
            std::size_t j = k + uniformBelow(rng, eligible.size() - k);
            std::swap(eligible[k], eligible[j]);
            taken[eligible[k]] = true;
            out.push_back(*ordered[eligible[k]]);
        }
    }
    return out;
}

const std::vector<std::string>& noContentPhrases() {
    static const std::vector<std::string> phrases = {
        "no meaningful content",
        "n/a",
        "none",
        "no report",
        "no report available",
        "revised report",
        "revised report:",
        "report:",
        "i don't know",
        "i am not sure",
        "i'm sorry, i cannot help with that",
        "i cannot provide a medical diagnosis",
        "as an ai language model, i cannot provide a diagnosis",
        "the report is as follows",
    };
    return phrases;
}

bool isEmptyReport(const std::string& text) {
    if (wordCount(text) < 3) return true;
    std::string norm;
    bool space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !norm.empty();
            continue;
        }
        if (space) norm += ' ';
        space = false;
        norm += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    while (!norm.empty() && (norm.back() == '.' || norm.back() == '!')) norm.pop_back();
    const auto& phrases = noContentPhrases();
    return std::find(phrases.begin(), phrases.end(), norm) != phrases.end();
}

LengthStats lengthStats(const std::vector<RefinedReport>& reports, const std::vector<std::size_t>& boundaries) {
    for (std::size_t i = 1; i < boundaries.size(); ++i) {
        if (boundaries[i] <= boundaries[i - 1]) throw DomainError("length bucket boundaries must be strictly increasing");
    }
    LengthStats s;
    std::size_t lower = 0;
    for (auto b : boundaries) {
        s.histogram.push_back({lower, b, 0});
        lower = b;
    }
    s.histogram.push_back({lower, std::nullopt, 0});

    std::int64_t empty = 0;
    double totalWords = 0.0;
    for (const auto& r : reports) {
        std::size_t wc = wordCount(r.text);
        auto slot = std::upper_bound(boundaries.begin(), boundaries.end(), wc) - boundaries.begin();
        ++s.histogram[static_cast<std::size_t>(slot)].count;
        if (isEmptyReport(r.text)) ++empty;
        totalWords += static_cast<double>(wc);
    }
    s.n = static_cast<std::int64_t>(reports.size());
    if (s.n > 0) {
        s.emptyReportFraction = static_cast<double>(empty) / static_cast<double>(s.n);
        s.meanWordCount = totalWords / static_cast<double>(s.n);
    }
    return s;
}

// ---- BLEU --------------------------------------------------------------------

namespace {

std::vector<std::string> bleuTokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string tok; in >> tok;) {
        std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) { return std::tolower(c); });
        out.push_back(std::move(tok));
    }
    return out;
}

using NgramCounts = std::map<std::vector<std::string>, std::int64_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

struct BleuStats {
    std::array<std::int64_t, 4> matches{};
    std::array<std::int64_t, 4> totals{};
    std::int64_t candidateLength = 0;
    std::int64_t referenceLength = 0;
};

void accumulate(BleuStats& stats, const std::string& candidate, const std::vector<std::string>& references) {
    if (references.empty()) throw DomainError("BLEU needs at least one reference");
    auto cand = bleuTokens(candidate);
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : references) refs.push_back(bleuTokens(r));

    auto c = static_cast<std::int64_t>(cand.size());
    std::int64_t closest = static_cast<std::int64_t>(refs.front().size());
    for (const auto& r : refs) {
        auto len = static_cast<std::int64_t>(r.size());
        auto dist = std::abs(len - c);
        auto best = std::abs(closest - c);
        if (dist < best || (dist == best && len < closest)) closest = len;
    }
    stats.candidateLength += c;
    stats.referenceLength += closest;

    for (std::size_t n = 1; n <= 4; ++n) {
        NgramCounts candCounts = ngrams(cand, n);
        NgramCounts maxRef;
        for (const auto& r : refs) {
            for (const auto& [gram, count] : ngrams(r, n)) maxRef[gram] = std::max(maxRef[gram], count);
        }
        for (const auto& [gram, count] : candCounts) {
            auto it = maxRef.find(gram);
            stats.matches[n - 1] += std::min(count, it == maxRef.end() ? 0 : it->second);
            stats.totals[n - 1] += count;
        }
    }
}

double combine(const BleuStats& s) {
    if (s.candidateLength == 0) return 0.0;
    double logSum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        if (s.matches[n] == 0 || s.totals[n] == 0) return 0.0;
        logSum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
    }
    double c = static_cast<double>(s.candidateLength);
    double r = static_cast<double>(s.referenceLength);
    double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return std::min(1.0, bp * std::exp(logSum / 4.0));
}

}  // namespace

double bleu4(const std::string& candidate, const std::vector<std::string>& references) {
    BleuStats stats;
    accumulate(stats, candidate, references);
    return combine(stats);
}

double corpusBleu4(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
    if (candidates.size() != references.size()) throw DomainError("candidate and reference counts differ");
    BleuStats stats;
    for (std::size_t i = 0; i < candidates.size(); ++i) accumulate(stats, candidates[i], references[i]);
    return combine(stats);
}

// ---- reports -----------------------------------------------------------------

namespace {

Json metricJson(const Metric& m) {
    return Json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"degenerate", m.degenerate}};
}

Metric metricFromJson(const Json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(),
            j.value("degenerate", false)};
}

Metrics metricsFromJson(const Json& j) {
    Metrics m;
    for (auto d : kDiseases) m.perObservation[indexOf(d)] = metricFromJson(j.at("perObservation").at(std::string(jsonKey(d))));
    m.macro = metricFromJson(j.at("macro"));
    return m;
}

}  // namespace

Json toJson(const Metrics& m) {
    Json per = Json::object();
    for (auto d : kDiseases) per[std::string(jsonKey(d))] = metricJson(m[d]);
    return Json{{"perObservation", per}, {"macro", metricJson(m.macro)}};
}

Json toJson(const LengthStats& s) {
    Json hist = Json::array();
    for (const auto& b : s.histogram) {
        Json e{{"lower", b.lower}, {"count", b.count}};
        e["upper"] = b.upper ? Json(*b.upper) : Json(nullptr);
        hist.push_back(e);
    }
    return Json{{"histogram", hist},
                {"emptyReportFraction", s.emptyReportFraction},
                {"n", s.n},
                {"meanWordCount", s.meanWordCount}};
}

Json toJson(const EvalReport& r) {
    Json counts = Json::object();
    for (auto d : kDiseases) {
        const Counts& k = r.counts[d];
        counts[std::string(jsonKey(d))] = {{"tp", k.tp}, {"fp", k.fp}, {"fn", k.fn}, {"tn", k.tn}};
    }
    Json j{{"n", r.n},
           {"metrics", toJson(r.metrics)},
           {"counts", counts},
           {"lengths", toJson(r.lengths)},
           {"metadata",
            {{"promptDesign", r.metadata.promptDesign},
             {"backendId", r.metadata.backendId},
             {"uncertainPolicy", r.metadata.uncertainPolicy},
             {"seed", r.metadata.seed}}},
           {"failedCaseIds", r.failedCaseIds}};
    j["bleu4"] = r.bleu4 ? Json(*r.bleu4) : Json(nullptr);
    j["alternatePolicyMetrics"] = r.alternatePolicyMetrics ? toJson(*r.alternatePolicyMetrics) : Json(nullptr);
    return j;
}

EvalReport evalReportFromJson(const Json& j) {
    EvalReport r;
    r.n = j.at("n").get<std::int64_t>();
    r.metrics = metricsFromJson(j.at("metrics"));
    r.counts.n = r.n;
    for (auto d : kDiseases) {
        const Json& k = j.at("counts").at(std::string(jsonKey(d)));
        r.counts.perObservation[indexOf(d)] = {k.at("tp").get<std::int64_t>(), k.at("fp").get<std::int64_t>(),
                                               k.at("fn").get<std::int64_t>(), k.at("tn").get<std::int64_t>()};
    }
    const Json& len = j.at("lengths");
    for (const auto& b : len.at("histogram")) {
        LengthBucket bucket{b.at("lower").get<std::size_t>(), std::nullopt, b.at("count").get<std::int64_t>()};
        if (!b.at("upper").is_null()) bucket.upper = b.at("upper").get<std::size_t>();
        r.lengths.histogram.push_back(bucket);
    }
    r.lengths.emptyReportFraction = len.at("emptyReportFraction").get<double>();
    r.lengths.n = len.at("n").get<std::int64_t>();
    r.lengths.meanWordCount = len.value("meanWordCount", 0.0);
    if (!j.at("bleu4").is_null()) r.bleu4 = j.at("bleu4").get<double>();
    const Json& meta = j.at("metadata");
    r.metadata = {meta.at("promptDesign").get<std::string>(), meta.at("backendId").get<std::string>(),
                  meta.at("uncertainPolicy").get<std::string>(), meta.at("seed").get<std::uint64_t>()};
    if (!j.at("alternatePolicyMetrics").is_null()) r.alternatePolicyMetrics = metricsFromJson(j["alternatePolicyMetrics"]);
    r.failedCaseIds = j.value("failedCaseIds", std::vector<std::string>{});
    return r;
}

std::string formatTable(const Metrics& m) {
    std::string out = fmt::format("{:<18}{:>8}{:>8}{:>8}\n", "Observation", "PR", "RC", "F1");
    for (auto d : kDiseases) {
        const Metric& x = m[d];
        out += fmt::format("{:<18}{:>8.3f}{:>8.3f}{:>8.3f}{}\n", displayName(d), x.precision, x.recall, x.f1,
                           x.degenerate ? "  *" : "");
    }
    out += fmt::format("{:<18}{:>8.3f}{:>8.3f}{:>8.3f}\n", "Average", m.macro.precision, m.macro.recall, m.macro.f1);
    return out;
}

EvalReport evaluate(const std::vector<EvalCase>& cases, const labeler::Labeler& labeler, labeler::UncertainPolicy policy,
                    EvalMetadata metadata, const std::vector<std::size_t>& boundaries) {
    using labeler::UncertainPolicy;
    const UncertainPolicy other =
        policy == UncertainPolicy::AsPositive ? UncertainPolicy::AsNegative : UncertainPolicy::AsPositive;

    std::vector<BinaryLabels> pred, truth, predAlt, truthAlt;
    std::vector<RefinedReport> reports;
    std::vector<std::string> candidates;
    std::vector<std::vector<std::string>> references;
    for (const auto& c : cases) {
        LabelSet labels = labeler.label(c.refinedReport);
        pred.push_back(labeler::binarize(labels, policy));
        truth.push_back(labeler::binarize(c.groundTruth, policy));
        predAlt.push_back(labeler::binarize(labels, other));
        truthAlt.push_back(labeler::binarize(c.groundTruth, other));
        RefinedReport r;
        r.caseId = c.caseId;
        r.text = c.refinedReport;
        r.wordCount = wordCount(r.text);
        reports.push_back(std::move(r));
        if (c.draftReport && !c.draftReport->empty()) {
            candidates.push_back(c.refinedReport);
            references.push_back({*c.draftReport});
        }
    }

    EvalReport out;
    metadata.uncertainPolicy = std::string(labeler::policyName(policy));
    out.metadata = std::move(metadata);
    out.counts = confusion(pred, truth);
    out.metrics = prf1(out.counts);
    out.n = out.counts.n;
    out.lengths = lengthStats(reports, boundaries);
    if (!candidates.empty()) out.bleu4 = corpusBleu4(candidates, references);
    Metrics alt = prf1(confusion(predAlt, truthAlt));
    if (!(alt == out.metrics)) out.alternatePolicyMetrics = alt;
    return out;
}

}  // namespace chatcad::eval
