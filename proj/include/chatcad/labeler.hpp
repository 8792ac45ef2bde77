#pragma once

// Rule-based report labeler: lexicon phrase matching with NegEx-style
// negation and uncertainty cues, aggregated per observation.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "chatcad/types.hpp"

namespace chatcad::labeler {

inline constexpr int kSchemaVersion = 1;

struct LexiconEntry {
    Observation observation = Observation::Cardiomegaly;
    std::vector<std::string> phrases;
};

struct Lexicon {
    int schemaVersion = kSchemaVersion;
    std::vector<LexiconEntry> entries;
    // Phrases consumed without producing a mention ("pericardial effusion").
    std::vector<std::string> ignorePhrases;

    static Lexicon defaults();
    static Lexicon fromJson(const Json& j);
    static Lexicon load(const std::string& path);
    Json toJson() const;
    void validate() const;
};

struct CueSet {
    int schemaVersion = kSchemaVersion;
    std::vector<std::string> negationCues;         // precede the mention
    std::vector<std::string> uncertaintyCues;      // precede the mention
    std::vector<std::string> postNegationCues;     // follow the mention
    std::vector<std::string> postUncertaintyCues;  // follow the mention
    std::vector<std::string> pseudoCues;           // look like cues but are not ("no change")
    std::vector<std::string> terminators;          // end a cue's scope ("but")
    int scopeWindow = 6;

    static CueSet defaults();
    static CueSet fromJson(const Json& j);
    static CueSet load(const std::string& path);
    Json toJson() const;
    void validate() const;
};

struct Sentence {
    std::string text;
    std::size_t begin = 0;  // offsets into the original text
    std::size_t end = 0;
};

// Splits after . ! ? followed by whitespace, except after guarded
// abbreviations (dr., no., e.g., i.e.).
std::vector<Sentence> segmentSentences(std::string_view text);

// Lowercased alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view text);

enum class UncertainPolicy { AsPositive, AsNegative };

std::string_view policyName(UncertainPolicy p);
UncertainPolicy policyFromName(std::string_view n);

using BinaryLabels = std::array<bool, kDiseaseCount>;

BinaryLabels binarize(const LabelSet& labels, UncertainPolicy policy);

class Labeler {
public:
    Labeler();
    Labeler(Lexicon lexicon, CueSet cues);

    LabelSet label(std::string_view report) const;

    const Lexicon& lexicon() const { return lexicon_; }
    const CueSet& cues() const { return cues_; }

private:
    enum CueFlag : unsigned {
        PreNeg = 1u << 0,
        PreUnc = 1u << 1,
        PostNeg = 1u << 2,
        PostUnc = 1u << 3,
        Pseudo = 1u << 4,
        Terminator = 1u << 5,
    };

    struct Pattern {
        std::vector<std::string> tokens;
        int observation;  // -1 for ignored phrases
    };

    struct CuePattern {
        std::vector<std::string> tokens;
        unsigned flags;
    };

    void labelSentence(const std::vector<std::string>& tokens, std::array<int, kDiseaseCount>& rank) const;

    Lexicon lexicon_;
    CueSet cues_;
    std::vector<Pattern> patterns_;   // longest first
    std::vector<CuePattern> cueTable_;  // longest first
};

// Uses the built-in lexicon and cue set.
LabelSet labelReport(std::string_view report);

}  // namespace chatcad::labeler
