#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "chatcad/types.hpp"

using namespace chatcad;

TEST(Grade, ExamplesFromGradingTable) {
    EXPECT_EQ(gradeOf(0.1), SeverityGrade::NoSign);
    EXPECT_EQ(gradeOf(0.2), SeverityGrade::SmallPossibility);
    EXPECT_EQ(gradeOf(1.0), SeverityGrade::Definitely);
}

TEST(Grade, BoundariesBelongToUpperGrade) {
    EXPECT_EQ(gradeOf(0.0), SeverityGrade::NoSign);
    EXPECT_EQ(gradeOf(std::nextafter(0.2, 0.0)), SeverityGrade::NoSign);
    EXPECT_EQ(gradeOf(0.5), SeverityGrade::Likely);
    EXPECT_EQ(gradeOf(std::nextafter(0.5, 0.0)), SeverityGrade::SmallPossibility);
    EXPECT_EQ(gradeOf(0.9), SeverityGrade::Definitely);
    EXPECT_EQ(gradeOf(std::nextafter(0.9, 0.0)), SeverityGrade::Likely);
}

TEST(Grade, OutOfRangeNamesValue) {
    EXPECT_THROW(gradeOf(-0.01), DomainError);
    EXPECT_THROW(gradeOf(1.5), DomainError);
    EXPECT_THROW(gradeOf(std::nan("")), DomainError);
    try {
        gradeOf(1.5);
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("1.5"), std::string::npos);
    }
}

TEST(Grade, MonotoneAndInsideInterval) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> xs{0.0, 0.2, 0.5, 0.9, 1.0};
    for (int i = 0; i < 5000; ++i) xs.push_back(u(rng));
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        auto g = gradeOf(xs[i]);
        EXPECT_TRUE(gradeInterval(g).contains(xs[i])) << xs[i];
        if (i > 0) EXPECT_LE(gradeOf(xs[i - 1]), g);
    }
}

TEST(Grade, IntervalsPartitionUnitRange) {
    EXPECT_EQ(gradeInterval(SeverityGrade::NoSign).lower, 0.0);
    EXPECT_EQ(gradeInterval(SeverityGrade::NoSign).upper, gradeInterval(SeverityGrade::SmallPossibility).lower);
    EXPECT_EQ(gradeInterval(SeverityGrade::SmallPossibility).upper, gradeInterval(SeverityGrade::Likely).lower);
    EXPECT_EQ(gradeInterval(SeverityGrade::Likely).upper, gradeInterval(SeverityGrade::Definitely).lower);
    EXPECT_TRUE(gradeInterval(SeverityGrade::Definitely).upperClosed);
    EXPECT_FALSE(gradeInterval(SeverityGrade::Likely).upperClosed);
}

TEST(Grade, NamesRoundTrip) {
    for (auto g : {SeverityGrade::NoSign, SeverityGrade::SmallPossibility, SeverityGrade::Likely,
                   SeverityGrade::Definitely}) {
        EXPECT_EQ(gradeFromName(gradeName(g)), g);
    }
    EXPECT_EQ(gradeName(SeverityGrade::SmallPossibility), "SmallPossibility");
    EXPECT_EQ(gradePhrase(SeverityGrade::SmallPossibility), "Small possibility");
}

TEST(WordCount, Examples) {
    EXPECT_EQ(wordCount(""), 0u);
    EXPECT_EQ(wordCount("no acute findings"), 3u);
    EXPECT_EQ(wordCount("  left   lower lobe "), 3u);
    EXPECT_EQ(wordCount("a\tb\nc"), 3u);
}

TEST(Observation, KeysAndNames) {
    EXPECT_EQ(displayName(Observation::PleuralEffusion), "Pleural Effusion");
    EXPECT_EQ(jsonKey(Observation::PleuralEffusion), "pleuralEffusion");
    EXPECT_EQ(observationFromKey("atelectasis"), Observation::Atelectasis);
    EXPECT_THROW(observationFromKey("pneumonia"), DomainError);
}

TEST(Scores, RangeChecked) {
    EXPECT_THROW(DiagnosisScores({0.1, 0.2, 1.2, 0.0, 0.0}), DomainError);
    EXPECT_THROW(DiagnosisScores({0.1, -0.2, 0.2, 0.0, 0.0}), DomainError);
    EXPECT_NO_THROW(DiagnosisScores({0.0, 1.0, 0.5, 0.0, 0.0}));
}

TEST(Scores, JsonNeedsExactlyFiveKeys) {
    Json ok = {{"cardiomegaly", 0.1}, {"edema", 0.2}, {"consolidation", 0.3}, {"atelectasis", 0.4},
               {"pleuralEffusion", 0.5}};
    auto s = ok.get<DiagnosisScores>();
    EXPECT_EQ(s[Observation::Atelectasis], 0.4);
    EXPECT_EQ(Json(s), ok);

    Json missing = ok;
    missing.erase("edema");
    EXPECT_THROW(missing.get<DiagnosisScores>(), DomainError);
    Json extra = ok;
    extra["noFinding"] = 0.0;
    EXPECT_THROW(extra.get<DiagnosisScores>(), DomainError);
}

TEST(LabelSet, NoFindingDerived) {
    LabelSet l;
    EXPECT_TRUE(l.noFinding());
    l.set(Observation::Edema, LabelStatus::Negative);
    EXPECT_TRUE(l.noFinding());
    l.set(Observation::Edema, LabelStatus::Uncertain);
    EXPECT_FALSE(l.noFinding());
}

TEST(LabelSet, JsonRechecksNoFinding) {
    LabelSet l;
    l.set(Observation::Cardiomegaly, LabelStatus::Positive);
    Json j = l;
    EXPECT_EQ(j["cardiomegaly"], "Positive");
    EXPECT_EQ(j["noFinding"], false);
    EXPECT_EQ(j.get<LabelSet>(), l);
    j["noFinding"] = true;
    EXPECT_THROW(j.get<LabelSet>(), DomainError);
}

TEST(CaseRecord, NeedsDraftOrScores) {
    Json j = {{"caseId", "c1"}, {"segmentation", Json::array()}};
    EXPECT_THROW(j.get<CaseRecord>(), DomainError);
    j["draftReport"] = "Lungs clear.";
    auto c = j.get<CaseRecord>();
    EXPECT_TRUE(c.hasDraftReport());
    EXPECT_FALSE(c.scores.has_value());
}

TEST(CaseRecord, JsonRoundTrip) {
    CaseRecord c;
    c.caseId = "c9";
    c.draftReport = "Heart enlarged.";
    c.scores = DiagnosisScores({0.9, 0.1, 0.0, 0.3, 0.2});
    c.segmentation.push_back({"left lower lobe", 0.25, "consolidation"});
    LabelSet gt;
    gt.set(Observation::Cardiomegaly, LabelStatus::Positive);
    c.groundTruthLabels = gt;
    c.createdAt = "2026-01-01T00:00:00Z";
    EXPECT_EQ(Json(c).get<CaseRecord>(), c);
}

TEST(Segmentation, Validated) {
    Json j = {{"region", ""}, {"areaFraction", 0.1}, {"finding", "x"}};
    EXPECT_THROW(j.get<SegmentationSummary>(), DomainError);
    j = {{"region", "left lung"}, {"areaFraction", 1.1}, {"finding", "x"}};
    EXPECT_THROW(j.get<SegmentationSummary>(), DomainError);
}

TEST(RefinedReport, WordCountRechecked) {
    RefinedReport r;
    r.reportId = "rpt-1";
    r.caseId = "c1";
    r.text = "Heart size normal.";
    r.backendId = "mock";
    r.wordCount = 3;
    Json j = r;
    EXPECT_EQ(j.get<RefinedReport>(), r);
    j["wordCount"] = 4;
    EXPECT_THROW(j.get<RefinedReport>(), DomainError);
}

TEST(PromptDesignNames, AcceptBothCases) {
    EXPECT_EQ(designFromName("p2"), PromptDesign::P2);
    EXPECT_EQ(designFromName("P3"), PromptDesign::P3);
    EXPECT_THROW(designFromName("P4"), DomainError);
}
