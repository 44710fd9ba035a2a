#include <gtest/gtest.h>

#include <sstream>

#include "painfc/eval_metrics.hpp"
#include "painfc/llm_bridge.hpp"
#include "painfc/pharma_ladder.hpp"
#include "painfc/synth_cohort.hpp"
#include "painfc/text_extract.hpp"

using namespace painfc;

namespace {

SynthConfig small(std::uint64_t seed, std::size_t n = 150) {
  SynthConfig c;
  c.n_patients = n;
  c.seed = seed;
  return c;
}

std::string serialize(const Cohort& c) {
  std::string s;
  for (const auto& r : c.records) s += serialize_record(r) + "\n";
  return s;
}

}  // namespace

TEST(Generate, FixedSeedBitIdentical) {
  EXPECT_EQ(serialize(generate(small(5)).cohort), serialize(generate(small(5)).cohort));
  EXPECT_NE(serialize(generate(small(5)).cohort), serialize(generate(small(6)).cohort));
}

TEST(Generate, InvalidConfigRejected) {
  auto c = small(1);
  c.n_patients = 5;
  EXPECT_THROW(generate(c), ArgumentError);
  c = small(1);
  c.positive_rate_48 = 1.0;
  EXPECT_THROW(generate(c), ArgumentError);
  c = small(1);
  c.effect_labs = -1;
  EXPECT_THROW(generate(c), ArgumentError);
}

TEST(Generate, AstGroupsDifferAtHundredPerGroup) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto res = generate(small(seed, 260));
    std::vector<double> neg, pos;
    for (std::size_t i = 0; i < res.cohort.records.size(); ++i) {
      const auto& labs = res.cohort.records[i].labs;
      auto it = labs.find("AST");
      if (it == labs.end()) continue;
      auto& g = res.latent[i].label_48 ? pos : neg;
      if (g.size() < 100) g.push_back(it->second);
    }
    ASSERT_EQ(neg.size(), 100u);
    ASSERT_EQ(pos.size(), 100u);
    EXPECT_LT(group_compare(neg, pos).p_value, 0.05) << "seed " << seed;
  }
}

TEST(Generate, ObservationTextRoundTrips) {
  const auto& rules = default_rule_set();
  std::size_t checked = 0;
  for (std::uint64_t seed : {11u, 12u}) {
    auto res = generate(small(seed, 300));
    for (std::size_t i = 0; i < res.cohort.records.size(); ++i) {
      const auto& obs = res.cohort.records[i].pain_observations;
      const auto& want = res.latent[i].observation_scores;
      ASSERT_EQ(obs.size(), want.size());
      for (std::size_t k = 0; k < obs.size(); ++k) {
        EXPECT_EQ(observation_score(obs[k], rules), want[k]) << (obs[k].text ? *obs[k].text : "<numeric>");
        ++checked;
      }
      const auto scores = extract_scores(obs);
      EXPECT_EQ(scores.nrs_24, res.latent[i].nrs_24);
      EXPECT_EQ(scores.nrs_48, res.latent[i].nrs_48);
      EXPECT_EQ(scores.nrs_72, res.latent[i].nrs_72);
    }
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Generate, LatentLabelsMatchScores) {
  auto res = generate(small(4));
  for (const auto& l : res.latent) {
    EXPECT_EQ(l.label_48, l.nrs_48 >= kPainThreshold);
    EXPECT_EQ(l.label_72, l.nrs_72 >= kPainThreshold);
  }
}

TEST(Generate, PrevalenceWithinTwoPercent) {
  for (std::uint64_t seed : {21u, 22u}) {
    SynthConfig c = small(seed, 4000);
    c.positive_rate_48 = 0.3;
    c.positive_rate_72 = 0.55;
    auto res = generate(c);
    double p48 = 0, p72 = 0;
    for (const auto& l : res.latent) {
      p48 += l.label_48;
      p72 += l.label_72;
    }
    EXPECT_NEAR(p48 / 4000.0, 0.3, 0.02);
    EXPECT_NEAR(p72 / 4000.0, 0.55, 0.02);
  }
}

TEST(Generate, RecordsSurviveSerialization) {
  auto res = generate(small(8, 60));
  std::istringstream in(serialize(res.cohort));
  auto ing = ingest_stream(in, "synthetic");
  EXPECT_TRUE(ing.report.empty());
  ASSERT_EQ(ing.cohort.records.size(), res.cohort.records.size());
  for (std::size_t i = 0; i < res.cohort.records.size(); ++i) EXPECT_EQ(ing.cohort.records[i], res.cohort.records[i]);
}

TEST(Generate, MedicationTextClassifiable) {
  auto res = generate(small(9));
  const auto lex = default_lexicon();
  for (const auto& r : res.cohort.records)
    for (const auto& m : r.medication_log) EXPECT_TRUE(classify_drug(m.drug_text, lex)) << m.drug_text;
}

TEST(Generate, NullEffectsRemoveLabShift) {
  SynthConfig c = small(3, 3000);
  c.effect_labs = 0;
  auto res = generate(c);
  std::vector<double> neg, pos;
  for (std::size_t i = 0; i < res.cohort.records.size(); ++i) {
    auto it = res.cohort.records[i].labs.find("AST");
    if (it != res.cohort.records[i].labs.end()) (res.latent[i].label_48 ? pos : neg).push_back(it->second);
  }
  const auto cmp = group_compare(neg, pos);
  EXPECT_NEAR(cmp.a.mean, cmp.b.mean, 1.0);
}

TEST(MockClinician, ReadsMostRecentSignal) {
  const auto pos = "Nursing: " + positive_note_phrases()[0] + ".";
  const auto neg = "Nursing: " + negative_note_phrases()[1] + ".";
  EXPECT_DOUBLE_EQ(parse_probability(mock_clinician_reply("notes:\n" + neg + "\n" + pos)).p_llm, 0.80);
  EXPECT_DOUBLE_EQ(parse_probability(mock_clinician_reply("notes:\n" + pos + "\n" + neg)).p_llm, 0.15);
  auto none = parse_probability(mock_clinician_reply("nothing relevant"));
  EXPECT_DOUBLE_EQ(none.p_llm, 0.50);
  EXPECT_EQ(none.provenance, ProbabilityProvenance::tier_midpoint);
}
