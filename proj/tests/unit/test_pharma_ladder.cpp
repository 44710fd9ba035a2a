#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "painfc/pharma_ladder.hpp"
#include "painfc/random.hpp"

using namespace painfc;

namespace {
MedicationEntry med(double t, std::string drug, std::optional<double> dose) { return {t, std::move(drug), dose, std::nullopt}; }
}  // namespace

TEST(ClassifyDrug, LadderTable) {
  const auto lex = default_lexicon();
  for (const char* d : {"Morphine", "fentanyl", "OXYCODONE"}) EXPECT_EQ(classify_drug(d, lex), DrugTier::strong_opioid) << d;
  for (const char* d : {"codeine", "Tramadol"}) EXPECT_EQ(classify_drug(d, lex), DrugTier::moderate_opioid) << d;
  for (const char* d : {"ibuprofen", "acetaminophen"}) EXPECT_EQ(classify_drug(d, lex), DrugTier::non_opioid) << d;
}

TEST(ClassifyDrug, TokenMatchWithDose) { EXPECT_EQ(classify_drug("tramadol 50mg", default_lexicon()), DrugTier::moderate_opioid); }

TEST(ClassifyDrug, SynonymsAndBrands) {
  const auto lex = default_lexicon();
  EXPECT_EQ(classify_drug("MS Contin ER 30 mg", lex), DrugTier::strong_opioid);
  EXPECT_EQ(classify_drug("Fentanyl (Duragesic) patch", lex), DrugTier::strong_opioid);
  EXPECT_EQ(classify_drug("Tylenol", lex), DrugTier::non_opioid);
}

TEST(ClassifyDrug, UnclassifiedIsAValue) {
  EXPECT_FALSE(classify_drug("vitamin C", default_lexicon()));
  EXPECT_FALSE(classify_drug("", default_lexicon()));
}

TEST(ClassifyDrug, NoSubstringFalsePositive) { EXPECT_FALSE(classify_drug("morphinegate", default_lexicon())); }

TEST(Lexicon, ParseFile) {
  std::istringstream in("# name, tier, synonyms\nhydromorphone, 3, dilaudid\nnaproxen, 1\n");
  auto lex = parse_lexicon(in);
  EXPECT_EQ(classify_drug("Dilaudid 2 mg", lex), DrugTier::strong_opioid);
  EXPECT_EQ(classify_drug("naproxen", lex), DrugTier::non_opioid);
}

TEST(Lexicon, BadTierRejected) {
  std::istringstream in("aspirin, 4\n");
  EXPECT_THROW(parse_lexicon(in), ArgumentError);
}

TEST(BuildProfile, EmptyLog) {
  auto p = build_profile({}, default_lexicon());
  for (auto t : kAllTiers)
    for (std::size_t w = 0; w < p.windows.size(); ++w) {
      EXPECT_FALSE(p.at(t, w).used);
      EXPECT_EQ(p.at(t, w).log_dose, 0.0);
    }
}

TEST(BuildProfile, MorphineTenAtFiveHours) {
  auto p = build_profile({med(5, "Morphine", 10.0)}, default_lexicon());
  EXPECT_TRUE(p.at(DrugTier::strong_opioid, 0).used);
  EXPECT_NEAR(p.at(DrugTier::strong_opioid, 0).log_dose, 2.3978952728, 1e-9);
  EXPECT_NEAR(p.at(DrugTier::strong_opioid, 0).log_dose, std::log(11.0), 1e-12);
}

TEST(BuildProfile, WindowMembership) {
  auto p = build_profile({med(30, "oxycodone", 10.0)}, default_lexicon());
  EXPECT_FALSE(p.at(DrugTier::strong_opioid, 0).used);
  EXPECT_TRUE(p.at(DrugTier::strong_opioid, 1).used);
}

TEST(BuildProfile, AbsentDoseSetsUsedOnly) {
  auto p = build_profile({med(3, "codeine", std::nullopt)}, default_lexicon());
  EXPECT_TRUE(p.at(DrugTier::moderate_opioid, 0).used);
  EXPECT_EQ(p.at(DrugTier::moderate_opioid, 0).log_dose, 0.0);
}

TEST(BuildProfile, RejectsBadWindows) {
  EXPECT_THROW(build_profile({}, default_lexicon(), {48, 24}), ArgumentError);
  EXPECT_THROW(build_profile({}, default_lexicon(), {0, 24}), ArgumentError);
}

TEST(BuildProfile, MonotoneAndInvertible) {
  static const char* drugs[] = {"morphine", "tramadol", "ibuprofen", "Tylenol", "oxycontin", "vitamin D"};
  Rng rng(5);
  const auto lex = default_lexicon();
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<MedicationEntry> log;
    const auto n = uniform_index(rng, 8);
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<double> dose;
      if (bernoulli(rng, 0.8)) dose = 1.0 + 200.0 * unit_uniform(rng);
      log.push_back(med(60.0 * unit_uniform(rng), drugs[uniform_index(rng, 6)], dose));
    }
    const auto before = build_profile(log, lex);
    // invertibility against an independent window sum
    for (auto t : kAllTiers)
      for (std::size_t w = 0; w < before.windows.size(); ++w) {
        double sum = 0.0;
        bool used = false;
        for (const auto& e : log)
          if (classify_drug(e.drug_text, lex) == t && e.time_h <= before.windows[w]) {
            used = true;
            sum += e.dose_mg.value_or(0.0);
          }
        EXPECT_EQ(before.at(t, w).used, used);
        EXPECT_NEAR(std::expm1(before.at(t, w).log_dose), sum, 1e-9 * std::max(1.0, sum));
        if (!before.at(t, w).used) {
          EXPECT_EQ(before.at(t, w).log_dose, 0.0);
        }
      }
    log.push_back(med(60.0 * unit_uniform(rng), drugs[uniform_index(rng, 6)], 5.0));
    const auto after = build_profile(log, lex);
    for (auto t : kAllTiers)
      for (std::size_t w = 0; w < before.windows.size(); ++w) {
        EXPECT_TRUE(!before.at(t, w).used || after.at(t, w).used);
        EXPECT_GE(after.at(t, w).log_dose, before.at(t, w).log_dose);
      }
  }
}

TEST(Backfill, TakesNextDoseOfSameDrug) {
  auto out = backfill_doses({med(2, "morphine", std::nullopt), med(8, "morphine", 10.0)});
  EXPECT_EQ(out[0].dose_mg, 10.0);
}

TEST(Backfill, SingleEntryUnchanged) {
  auto in = std::vector<MedicationEntry>{med(2, "morphine", std::nullopt)};
  EXPECT_EQ(backfill_doses(in), in);
}

TEST(Backfill, DifferentDrugNotUsed) {
  auto out = backfill_doses({med(2, "morphine", std::nullopt), med(8, "tramadol", 50.0)});
  EXPECT_FALSE(out[0].dose_mg);
}

TEST(Backfill, SynonymsShareADrugWithLexicon) {
  const auto lex = default_lexicon();
  auto out = backfill_doses({med(2, "MS Contin", std::nullopt), med(8, "Morphine", 15.0)}, &lex);
  EXPECT_EQ(out[0].dose_mg, 15.0);
}

TEST(Backfill, UnsortedIsArgumentError) {
  EXPECT_THROW(backfill_doses({med(8, "morphine", 1.0), med(2, "morphine", std::nullopt)}), ArgumentError);
}

TEST(Backfill, PreservesIdentityTimeAndPresentDoses) {
  Rng rng(9);
  static const char* drugs[] = {"morphine", "tramadol", "ibuprofen"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MedicationEntry> log;
    double t = 0;
    for (std::size_t i = 0, n = uniform_index(rng, 10); i < n; ++i) {
      t += unit_uniform(rng) * 5;
      log.push_back(med(t, drugs[uniform_index(rng, 3)], bernoulli(rng, 0.5) ? std::optional<double>(1 + uniform_index(rng, 50)) : std::nullopt));
    }
    const auto out = backfill_doses(log);
    ASSERT_EQ(out.size(), log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
      EXPECT_EQ(out[i].drug_text, log[i].drug_text);
      EXPECT_EQ(out[i].time_h, log[i].time_h);
      if (log[i].dose_mg) EXPECT_EQ(out[i].dose_mg, log[i].dose_mg);
      // oracle: nearest later dose of the same drug
      if (!log[i].dose_mg) {
        std::optional<double> expect;
        for (std::size_t j = i + 1; j < log.size() && !expect; ++j)
          if (log[j].drug_text == log[i].drug_text && log[j].dose_mg) expect = log[j].dose_mg;
        EXPECT_EQ(out[i].dose_mg, expect);
      }
    }
  }
}
