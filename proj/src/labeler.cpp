#include "chatcad/labeler.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>

namespace chatcad::labeler {

namespace {

constexpr std::array<std::string_view, 4> kAbbreviations = {"dr.", "no.", "e.g.", "i.e."};

bool isSpace(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool isAlnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool isAbbreviation(std::string_view text, std::size_t periodPos) {
    std::size_t start = periodPos;
    while (start > 0 && !isSpace(text[start - 1])) --start;
    while (start < periodPos && !isAlnum(text[start])) ++start;
    std::string token = lower(text.substr(start, periodPos - start + 1));
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), token) != kAbbreviations.end();
}

void pushTrimmed(std::string_view text, std::size_t begin, std::size_t end, std::vector<Sentence>& out) {
    while (begin < end && isSpace(text[begin])) ++begin;
    while (end > begin && isSpace(text[end - 1])) --end;
    if (begin < end) out.push_back({std::string(text.substr(begin, end - begin)), begin, end});
}

Json readJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError(fmt::format("cannot open '{}'", path));
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw DomainError(fmt::format("'{}' is not valid JSON: {}", path, e.what()));
    }
}

void requireLowercase(const std::vector<std::string>& phrases, std::string_view what) {
    for (const auto& p : phrases) {
        if (p.empty()) throw DomainError(fmt::format("empty {} phrase", what));
        if (p != lower(p)) throw DomainError(fmt::format("{} phrase '{}' must be lowercase", what, p));
    }
}

void checkSchema(const Json& j) {
    int v = j.value("schemaVersion", 0);
    if (v != kSchemaVersion) {
        throw DomainError(fmt::format("unsupported schemaVersion {} (expected {})", v, kSchemaVersion));
    }
}

std::vector<std::string> stringList(const Json& j, const char* key) {
    if (!j.contains(key)) return {};
    return j.at(key).get<std::vector<std::string>>();
}

}  // namespace

std::vector<Sentence> segmentSentences(std::string_view text) {
    std::vector<Sentence> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        if (i + 1 < text.size() && !isSpace(text[i + 1])) continue;
        if (c == '.' && isAbbreviation(text, i)) continue;
        pushTrimmed(text, start, i + 1, out);
        start = i + 1;
    }
    pushTrimmed(text, start, text.size(), out);
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (isAlnum(c)) {
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// ---- lexicon -----------------------------------------------------------------

Lexicon Lexicon::defaults() {
    Lexicon lex;
    lex.entries = {
        {Observation::Cardiomegaly,
         {"cardiomegaly", "enlarged cardiac silhouette", "enlargement of the cardiac silhouette",
          "cardiac silhouette is enlarged", "cardiac enlargement", "enlarged heart", "heart is enlarged",
          "heart size is enlarged", "enlarged heart size", "enlargement of the heart"}},
        {Observation::Edema,
         {"edema", "oedema", "pulmonary edema", "interstitial edema", "vascular congestion", "pulmonary congestion",
          "congestive heart failure", "chf"}},
        {Observation::Consolidation,
         {"consolidation", "consolidations", "airspace consolidation", "consolidative opacity",
          "consolidative opacities", "consolidative process"}},
        {Observation::Atelectasis,
         {"atelectasis", "atelectases", "atelectatic", "collapse of the lobe", "lobar collapse", "collapse",
          "collapsed"}},
        {Observation::PleuralEffusion,
         {"pleural effusion", "pleural effusions", "effusion", "effusions", "fluid in the pleural space",
          "pleural fluid", "hydrothorax", "blunting of the costophrenic angle", "blunting of the costophrenic angles",
          "blunted costophrenic angle", "blunted costophrenic angles"}},
    };
    lex.ignorePhrases = {"pericardial effusion", "pericardial effusions", "peripheral edema",
                         "soft tissue edema"};
    return lex;
}

void Lexicon::validate() const {
    if (schemaVersion != kSchemaVersion) throw DomainError("unsupported lexicon schemaVersion");
    std::map<std::string, Observation> owner;
    for (const auto& e : entries) {
        if (e.observation == Observation::NoFinding) throw DomainError("lexicon cannot target NoFinding");
        if (e.phrases.empty()) {
            throw DomainError(fmt::format("lexicon entry for {} has no phrases", displayName(e.observation)));
        }
        requireLowercase(e.phrases, "lexicon");
        for (const auto& p : e.phrases) {
            auto [it, inserted] = owner.emplace(p, e.observation);
            if (!inserted && it->second != e.observation) {
                throw DomainError(fmt::format("lexicon phrase '{}' assigned to both {} and {}", p,
                                              displayName(it->second), displayName(e.observation)));
            }
        }
    }
    requireLowercase(ignorePhrases, "ignore");
    for (const auto& p : ignorePhrases) {
        if (owner.count(p)) throw DomainError(fmt::format("phrase '{}' is both ignored and a mention", p));
    }
}

Lexicon Lexicon::fromJson(const Json& j) {
    checkSchema(j);
    Lexicon lex;
    for (const auto& e : j.at("entries")) {
        lex.entries.push_back({observationFromKey(e.at("observation").get<std::string>()),
                               e.at("phrases").get<std::vector<std::string>>()});
    }
    lex.ignorePhrases = stringList(j, "ignorePhrases");
    lex.validate();
    return lex;
}

Lexicon Lexicon::load(const std::string& path) { return fromJson(readJsonFile(path)); }

Json Lexicon::toJson() const {
    Json entriesJson = Json::array();
    for (const auto& e : entries) {
        entriesJson.push_back({{"observation", std::string(jsonKey(e.observation))}, {"phrases", e.phrases}});
    }
    return Json{{"schemaVersion", schemaVersion}, {"entries", entriesJson}, {"ignorePhrases", ignorePhrases}};
}

// ---- cues --------------------------------------------------------------------

CueSet CueSet::defaults() {
    CueSet c;
    c.negationCues = {"no", "not", "without", "free of", "resolved", "no evidence of", "negative for",
                      "absence of", "absent", "clear of", "rules out", "ruled out", "resolution of", "nor",
                      "interval resolution of", "no radiographic evidence of"};
    c.uncertaintyCues = {"may", "might", "possible", "possibly", "probable", "probably", "likely", "suspected",
                         "suspicious for", "concerning for", "cannot exclude", "can not exclude",
                         "cannot rule out", "could", "questionable", "question of", "equivocal", "suggestive of",
                         "borderline", "versus", "vs", "differential diagnosis includes", "may represent"};
    c.postNegationCues = {"not seen", "is not seen", "are not seen", "not identified", "not present",
                          "is absent", "are absent", "has resolved", "have resolved", "not evident",
                          "not visualized", "is not present", "are not present"};
    c.postUncertaintyCues = {"cannot be excluded", "can not be excluded", "not excluded", "is not excluded",
                             "cannot be ruled out", "is possible", "is suspected", "are suspected",
                             "is questioned", "not ruled out"};
    c.pseudoCues = {"no change", "no significant change", "no interval change", "not only", "no increase",
                    "without change", "not significantly changed", "no significant interval change"};
    c.terminators = {"but", "however", "although", "though", "except", "aside from", "apart from", "yet"};
    return c;
}

void CueSet::validate() const {
    if (schemaVersion != kSchemaVersion) throw DomainError("unsupported cue schemaVersion");
    if (scopeWindow < 1) throw DomainError(fmt::format("scopeWindow must be >= 1, got {}", scopeWindow));
    for (const auto* list : {&negationCues, &uncertaintyCues, &postNegationCues, &postUncertaintyCues, &pseudoCues,
                             &terminators}) {
        requireLowercase(*list, "cue");
    }
    std::set<std::string> negation(negationCues.begin(), negationCues.end());
    negation.insert(postNegationCues.begin(), postNegationCues.end());
    for (const auto* list : {&uncertaintyCues, &postUncertaintyCues}) {
        for (const auto& cue : *list) {
            if (negation.count(cue)) throw DomainError(fmt::format("cue '{}' is both negation and uncertainty", cue));
        }
    }
}

CueSet CueSet::fromJson(const Json& j) {
    checkSchema(j);
    CueSet c;
    c.negationCues = stringList(j, "negationCues");
    c.uncertaintyCues = stringList(j, "uncertaintyCues");
    c.postNegationCues = stringList(j, "postNegationCues");
    c.postUncertaintyCues = stringList(j, "postUncertaintyCues");
    c.pseudoCues = stringList(j, "pseudoCues");
    c.terminators = stringList(j, "terminators");
    c.scopeWindow = j.value("scopeWindow", 6);
    c.validate();
    return c;
}

CueSet CueSet::load(const std::string& path) { return fromJson(readJsonFile(path)); }

Json CueSet::toJson() const {
    return Json{{"schemaVersion", schemaVersion},       {"negationCues", negationCues},
                {"uncertaintyCues", uncertaintyCues}, {"postNegationCues", postNegationCues},
                {"postUncertaintyCues", postUncertaintyCues}, {"pseudoCues", pseudoCues},
                {"terminators", terminators},         {"scopeWindow", scopeWindow}};
}

// ---- labeling ----------------------------------------------------------------

std::string_view policyName(UncertainPolicy p) { return p == UncertainPolicy::AsPositive ? "AsPositive" : "AsNegative"; }

UncertainPolicy policyFromName(std::string_view n) {
    if (n == "AsPositive") return UncertainPolicy::AsPositive;
    if (n == "AsNegative") return UncertainPolicy::AsNegative;
    throw DomainError(fmt::format("unknown uncertain policy '{}'", n));
}

BinaryLabels binarize(const LabelSet& labels, UncertainPolicy policy) {
    BinaryLabels out{};
    for (auto d : kDiseases) {
        switch (labels[d]) {
            case LabelStatus::Positive: out[indexOf(d)] = true; break;
            case LabelStatus::Uncertain: out[indexOf(d)] = policy == UncertainPolicy::AsPositive; break;
            case LabelStatus::Negative:
            case LabelStatus::NotMentioned: out[indexOf(d)] = false; break;
        }
    }
    return out;
}

Labeler::Labeler() : Labeler(Lexicon::defaults(), CueSet::defaults()) {}

Labeler::Labeler(Lexicon lexicon, CueSet cues) : lexicon_(std::move(lexicon)), cues_(std::move(cues)) {
    lexicon_.validate();
    cues_.validate();
    for (const auto& e : lexicon_.entries) {
        for (const auto& p : e.phrases) patterns_.push_back({tokenize(p), static_cast<int>(indexOf(e.observation))});
    }
    for (const auto& p : lexicon_.ignorePhrases) patterns_.push_back({tokenize(p), -1});
    std::stable_sort(patterns_.begin(), patterns_.end(),
                     [](const Pattern& a, const Pattern& b) { return a.tokens.size() > b.tokens.size(); });

    std::map<std::vector<std::string>, unsigned> flags;
    auto add = [&](const std::vector<std::string>& list, unsigned flag) {
        for (const auto& cue : list) flags[tokenize(cue)] |= flag;
    };
    add(cues_.negationCues, PreNeg);
    add(cues_.uncertaintyCues, PreUnc);
    add(cues_.postNegationCues, PostNeg);
    add(cues_.postUncertaintyCues, PostUnc);
    add(cues_.pseudoCues, Pseudo);
    add(cues_.terminators, Terminator);
    for (auto& [tokens, f] : flags) {
        if (!tokens.empty()) cueTable_.push_back({tokens, f});
    }
    std::stable_sort(cueTable_.begin(), cueTable_.end(),
                     [](const CuePattern& a, const CuePattern& b) { return a.tokens.size() > b.tokens.size(); });
}

namespace {

bool matchesAt(const std::vector<std::string>& tokens, std::size_t pos, const std::vector<std::string>& pattern) {
    if (pattern.empty() || pos + pattern.size() > tokens.size()) return false;
    return std::equal(pattern.begin(), pattern.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
}

constexpr int kNotMentioned = 0;
constexpr int kNegative = 1;
constexpr int kUncertain = 2;
constexpr int kPositive = 3;

}  // namespace

void Labeler::labelSentence(const std::vector<std::string>& tokens, std::array<int, kDiseaseCount>& rank) const {
    struct Span {
        std::size_t begin, end;
        unsigned flags;
        int observation;
    };
    std::vector<Span> mentions;
    std::vector<Span> cueSpans;

    // Cues and mentions are matched independently, longest first, left to right.
    for (std::size_t i = 0; i < tokens.size();) {
        const CuePattern* hit = nullptr;
        for (const auto& c : cueTable_) {
            if (matchesAt(tokens, i, c.tokens)) {
                hit = &c;
                break;
            }
        }
        if (hit) {
            cueSpans.push_back({i, i + hit->tokens.size(), hit->flags, -1});
            i += hit->tokens.size();
        } else {
            ++i;
        }
    }
    for (std::size_t i = 0; i < tokens.size();) {
        const Pattern* hit = nullptr;
        for (const auto& p : patterns_) {
            if (matchesAt(tokens, i, p.tokens)) {
                hit = &p;
                break;
            }
        }
        if (hit) {
            if (hit->observation >= 0) mentions.push_back({i, i + hit->tokens.size(), 0, hit->observation});
            i += hit->tokens.size();
        } else {
            ++i;
        }
    }

    const auto window = static_cast<std::size_t>(cues_.scopeWindow);
    auto terminated = [&](std::size_t from, std::size_t to) {
        for (const auto& c : cueSpans) {
            if ((c.flags & Terminator) && c.begin >= from && c.end <= to) return true;
        }
        return false;
    };

    for (const auto& m : mentions) {
        bool negated = false;
        bool uncertain = false;
        for (const auto& c : cueSpans) {
            if (c.flags & Pseudo) continue;
            // A cue overlapping the mention itself governs nothing.
            if (c.end <= m.begin && m.begin - c.end < window && !terminated(c.end, m.begin)) {
                negated |= (c.flags & PreNeg) != 0;
                uncertain |= (c.flags & PreUnc) != 0;
            } else if (c.begin >= m.end && c.begin - m.end < window && !terminated(m.end, c.begin)) {
                negated |= (c.flags & PostNeg) != 0;
                uncertain |= (c.flags & PostUnc) != 0;
            }
        }
        int status = negated ? kNegative : uncertain ? kUncertain : kPositive;
        int& r = rank[static_cast<std::size_t>(m.observation)];
        r = std::max(r, status);
    }
}

LabelSet Labeler::label(std::string_view report) const {
    std::array<int, kDiseaseCount> rank{};
    rank.fill(kNotMentioned);
    for (const auto& sentence : segmentSentences(report)) labelSentence(tokenize(sentence.text), rank);
    LabelSet out;
    for (auto d : kDiseases) {
        switch (rank[indexOf(d)]) {
            case kPositive: out.set(d, LabelStatus::Positive); break;
            case kUncertain: out.set(d, LabelStatus::Uncertain); break;
            case kNegative: out.set(d, LabelStatus::Negative); break;
            default: out.set(d, LabelStatus::NotMentioned); break;
        }
    }
    return out;
}

LabelSet labelReport(std::string_view report) {
    static const Labeler labeler;
    return labeler.label(report);
}

}  // namespace chatcad::labeler
