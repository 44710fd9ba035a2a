// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "painfc/commands.hpp"

using namespace painfc;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && v_.pass) v_.detail = what;
    v_.pass = v_.pass && ok;
  }
  void note(const std::string& s) {
    if (v_.pass) v_.detail = s;
  }
  [[nodiscard]] Verdict verdict() const { return v_; }

 private:
  Verdict v_;
};

// Swallows stdout chatter from the command layer so the report stays one line per criterion.
class QuietStdout {
 public:
  QuietStdout() : old_(std::cout.rdbuf(sink_.rdbuf())) {}
  ~QuietStdout() { std::cout.rdbuf(old_); }

 private:
  std::ostringstream sink_;
  std::streambuf* old_;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

FeatureMatrix matrix(const std::vector<std::vector<double>>& rows, const Labels& labels) {
  FeatureMatrix m;
  m.cols = rows.empty() ? 0 : rows[0].size();
  for (std::size_t c = 0; c < m.cols; ++c) m.columns.push_back({"x" + std::to_string(c), ColumnKind::continuous, "acc", {}});
  for (std::size_t r = 0; r < rows.size(); ++r) m.push_row(rows[r], labels[r], "r" + std::to_string(r));
  return m;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("painfc_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

Verdict fusion_fidelity() {
  Check ck;
  struct Row {
    double p_ml, p_llm;
    bool integrated;
  };
  const Row rows[] = {{0.18, 0.85, false}, {0.24, 0.95, true}, {0.14, 0.50, false}, {0.18, 0.75, false},
                      {0.43, 0.55, false}, {0.69, 0.20, true}, {0.37, 0.70, true}};
  FusionConfig cfg;
  cfg.alpha = 0.2;
  cfg.beta = 0.6;
  cfg.decision_threshold = 0.5;
  std::string got;
  for (const auto& r : rows) {
    const bool pred = fuse(r.p_ml, r.p_llm, cfg).predicted;
    got += pred ? 'Y' : 'N';
    ck.expect(pred == r.integrated, "row (" + fmt(r.p_ml, 2) + ", " + fmt(r.p_llm, 2) + ") mismatched");
  }
  ck.note("integrated column " + got);
  return ck.verdict();
}

double concordance(const Labels& y, const std::vector<double>& s) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (!y[i] || y[j]) continue;
      pairs += 1;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return num / pairs;
}

Verdict auc_oracle() {
  Check ck;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(derive_seed(seed, "acceptance/auc"));
    const std::size_t n = 2 + uniform_index(rng, 199);
    Labels y;
    std::vector<double> s;
    for (std::size_t i = 0; i < n; ++i) {
      y.push_back(bernoulli(rng, 0.4));
      s.push_back(std::round((unit_uniform(rng) + 0.3 * y.back()) * 20) / 20);
    }
    y[0] = 1;
    y[1] = 0;
    const double d = std::fabs(roc_auc(y, s).auc - concordance(y, s));
    worst = std::max(worst, d);
    ck.expect(d <= 1e-9, "instance " + std::to_string(seed) + " differs by " + std::to_string(d));
  }
  std::ostringstream s;
  s << "200 instances, max |diff| " << std::scientific << std::setprecision(2) << worst;
  ck.note(s.str());
  return ck.verdict();
}

double kth_minority_distance(const FeatureMatrix& m, std::size_t a, std::size_t k) {
  std::vector<double> d;
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (r == a || !m.labels[r]) continue;
    double s = 0;
    for (std::size_t c = 0; c < m.cols; ++c) s += std::pow(m.at(r, c) - m.at(a, c), 2);
    d.push_back(s);
  }
  std::sort(d.begin(), d.end());
  return d[std::min(k, d.size()) - 1];
}

Verdict smote_geometry() {
  Check ck;
  std::size_t synthetic = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, "acceptance/smote"));
    const std::size_t n_min = 4 + uniform_index(rng, 8), n_maj = 40 + uniform_index(rng, 30), d = 1 + uniform_index(rng, 4);
    std::vector<std::vector<double>> rows;
    Labels y;
    for (std::size_t i = 0; i < n_min + n_maj; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = standard_normal(rng) + (i < n_min ? 1.0 : 0.0);
      rows.push_back(x);
      y.push_back(i < n_min);
    }
    const auto m = matrix(rows, y);
    SmoteConfig cfg;
    cfg.k_neighbors = 1 + uniform_index(rng, 5);
    cfg.target_ratio = 0.5 + 0.5 * unit_uniform(rng);
    cfg.trigger_ratio = std::min(0.3, cfg.target_ratio);
    cfg.seed = seed;
    const auto res = smote_resample(m, cfg);
    const auto& out = res.matrix;
    const std::string tag = "seed " + std::to_string(seed);
    ck.expect(res.resampled, tag + ": not resampled");
    for (std::size_t r = 0; r < m.rows; ++r) {
      bool same = out.labels[r] == m.labels[r] && !out.synthetic[r];
      for (std::size_t c = 0; c < m.cols; ++c) same = same && out.at(r, c) == m.at(r, c);
      ck.expect(same, tag + ": original row " + std::to_string(r) + " changed");
    }
    const auto pos = out.count_positive();
    ck.expect(static_cast<double>(pos) / static_cast<double>(out.rows - pos) >= cfg.target_ratio, tag + ": ratio below target");
    for (std::size_t s = m.rows; s < out.rows; ++s) {
      ++synthetic;
      bool found = false;
      for (std::size_t i = 0; i < m.rows && !found; ++i) {
        if (!m.labels[i]) continue;
        const double kth = kth_minority_distance(m, i, cfg.k_neighbors);
        for (std::size_t j = 0; j < m.rows && !found; ++j) {
          if (j == i || !m.labels[j]) continue;
          double dij = 0;
          for (std::size_t c = 0; c < m.cols; ++c) dij += std::pow(m.at(j, c) - m.at(i, c), 2);
          if (dij > kth + 1e-12 || dij == 0) continue;
          double num = 0;
          for (std::size_t c = 0; c < m.cols; ++c) num += (out.at(s, c) - m.at(i, c)) * (m.at(j, c) - m.at(i, c));
          const double lam = num / dij;
          if (lam < -1e-12 || lam > 1 + 1e-12) continue;
          bool on = true;
          for (std::size_t c = 0; c < m.cols; ++c)
            on = on && std::fabs(m.at(i, c) + lam * (m.at(j, c) - m.at(i, c)) - out.at(s, c)) < 1e-9;
          found = on;
        }
      }
      ck.expect(found, tag + ": synthetic row " + std::to_string(s) + " off every neighbor segment");
    }
  }
  ck.note("100 runs, " + std::to_string(synthetic) + " synthetic rows on segments");
  return ck.verdict();
}

Verdict stratification() {
  Check ck;
  std::size_t runs = 0;
  for (std::uint64_t seed = 0; runs < 50; ++seed) {
    Rng rng(derive_seed(seed, "acceptance/kfold"));
    const std::size_t n = 20 + uniform_index(rng, 300);
    Labels y(n);
    const double rate = 0.1 + 0.8 * unit_uniform(rng);
    for (auto& v : y) v = bernoulli(rng, rate);
    const auto P = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (P < 5 || n - P < 5) continue;
    ++runs;
    const auto folds = stratified_kfold(y, 5, seed);
    const std::string tag = "seed " + std::to_string(seed);
    ck.expect(folds.size() == 5, tag + ": fold count");
    std::vector<int> seen(n, 0);
    for (const auto& f : folds) {
      std::set<std::size_t> train(f.train.begin(), f.train.end());
      std::size_t pos = 0;
      for (auto i : f.validation) {
        ++seen[i];
        pos += y[i];
        ck.expect(!train.count(i), tag + ": index in train and validation");
      }
      ck.expect(f.train.size() + f.validation.size() == n, tag + ": train/validation sizes");
      const double ideal = static_cast<double>(P) * static_cast<double>(f.validation.size()) / static_cast<double>(n);
      ck.expect(std::fabs(static_cast<double>(pos) - ideal) <= 1.0, tag + ": positives " + std::to_string(pos) + " vs " + fmt(ideal));
      ck.expect(std::fabs(static_cast<double>(pos) - static_cast<double>(P) / 5.0) <= 1.0, tag + ": positives far from P/k");
    }
    ck.expect(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }), tag + ": folds do not partition");
  }
  ck.note("50 label vectors, k=5");
  return ck.verdict();
}

std::vector<ScoredDoc> brute_force_top_k(const KnowledgeBase& kb, const Embedding& q, std::size_t k) {
  std::vector<ScoredDoc> all;
  for (std::size_t i = 0; i < kb.docs.size(); ++i) {
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      uv += q[j] * kb.vectors[i][j];
      uu += q[j] * q[j];
      vv += kb.vectors[i][j] * kb.vectors[i][j];
    }
    all.push_back({kb.docs[i].doc_id, uv / std::sqrt(uu * vv)});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id; });
  all.resize(std::min(k, all.size()));
  return all;
}

Verdict retrieval_exactness() {
  Check ck;
  std::size_t ties = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, "acceptance/kb"));
    const std::size_t n = 1 + uniform_index(rng, 2000), d = 64;
    KnowledgeBase kb;
    kb.dim = d;
    kb.provider_id = "acceptance";
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    // doc ids out of insertion order so ties exercise the id rule
    for (std::size_t i = n; i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
    for (std::size_t i = 0; i < n; ++i) {
      Embedding v(d);
      if (i > 0 && unit_uniform(rng) < 0.1) {
        // exact duplicate or power-of-two rescale of an earlier vector: cosine ties bit-for-bit
        v = kb.vectors[uniform_index(rng, i)];
        if (bernoulli(rng, 0.5))
          for (auto& x : v) x *= 2.0;
        ++ties;
      } else {
        for (auto& x : v) x = standard_normal(rng);
      }
      kb.docs.push_back({"doc" + std::to_string(ids[i]), "", "", 0, 0, ""});
      kb.vectors.push_back(v);
    }
    Embedding q(d);
    if (bernoulli(rng, 0.3)) {
      q = kb.vectors[uniform_index(rng, n)];
    } else {
      for (auto& x : q) x = standard_normal(rng);
    }
    const std::size_t k = 1 + uniform_index(rng, 20);
    const auto got = top_k_vector(kb, q, k);
    const auto want = brute_force_top_k(kb, q, k);
    const std::string tag = "kb " + std::to_string(seed);
    ck.expect(got.size() == want.size(), tag + ": size");
    for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
      ck.expect(got[i].doc_id == want[i].doc_id, tag + ": rank " + std::to_string(i) + " " + got[i].doc_id + " vs " + want[i].doc_id);
      ck.expect(std::fabs(got[i].score - want[i].score) <= 1e-12, tag + ": score at rank " + std::to_string(i));
    }
  }
  ck.note("100 KBs, " + std::to_string(ties) + " tied vectors");
  return ck.verdict();
}

Verdict logistic_gradient() {
  Check ck;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, "acceptance/gradient"));
    const std::size_t n = 5 + uniform_index(rng, 40), d = 1 + uniform_index(rng, 6);
    std::vector<std::vector<double>> rows;
    Labels y;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = standard_normal(rng);
      rows.push_back(x);
      y.push_back(bernoulli(rng, 0.5));
    }
    const auto X = matrix(rows, y);
    std::vector<double> w(d);
    for (auto& v : w) v = standard_normal(rng);
    const double b = standard_normal(rng), l2 = unit_uniform(rng);
    const auto g = logistic_objective(X, w, b, l2);
    const double h = 1e-5;
    double diff = 0, norm = 0;
    for (std::size_t j = 0; j < d; ++j) {
      auto wp = w, wm = w;
      wp[j] += h;
      wm[j] -= h;
      const double fd = (logistic_objective(X, wp, b, l2).loss - logistic_objective(X, wm, b, l2).loss) / (2 * h);
      diff += std::pow(g.grad_w[j] - fd, 2);
      norm += fd * fd;
    }
    const double fdb = (logistic_objective(X, w, b + h, l2).loss - logistic_objective(X, w, b - h, l2).loss) / (2 * h);
    diff += std::pow(g.grad_b - fdb, 2);
    norm += fdb * fdb;
    const double rel = std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
    worst = std::max(worst, rel);
    ck.expect(rel <= 1e-5, "problem " + std::to_string(seed) + " relative error " + std::to_string(rel));
  }
  std::ostringstream s;
  s << "20 problems, max relative error " << std::scientific << std::setprecision(2) << worst;
  ck.note(s.str());
  return ck.verdict();
}

// Synth + train through the command layer; returns mean CV AUC per model for h48.
std::map<std::string, double> train_aucs(double effect, const std::string& name) {
  cli::RunConfig c;
  c.seed = 2026;
  c.output_dir = scratch(name).string();
  c.horizons = {Horizon::h48};
  c.models = {{ModelKind::random_forest, {}, 0}, {ModelKind::extra_trees, {}, 0}, {ModelKind::gradient_boosting, {}, 0}};
  c.synth.n_patients = 400;
  c.synth.positive_rate_48 = 0.55;
  c.synth.effect_labs = c.synth.effect_tiers = c.synth.effect_pain24 = effect;
  cli::validate(c);
  {
    QuietStdout quiet;
    cli::cmd_synth(c);
    cli::cmd_train(c);
  }
  const auto t = cli::read_table(c.out() / "train" / "summary.csv");
  std::map<std::string, double> auc;
  for (const auto& r : t.rows) auc[r.at(t.col("model"))] = *str::to_double(r.at(t.col("mean_auc")));
  fs::remove_all(c.out());
  return auc;
}

Verdict end_to_end_sanity() {
  Check ck;
  const auto strong = train_aucs(2.0, "strong");
  const auto null = train_aucs(0.0, "null");
  double best = 0;
  std::string line = "strong:";
  for (const auto& [m, a] : strong) {
    best = std::max(best, a);
    line += " " + m + "=" + fmt(a);
  }
  ck.expect(best >= 0.90, "no tree ensemble reached 0.90 on the strong cohort");
  line += "; null:";
  for (const auto& [m, a] : null) {
    ck.expect(a >= 0.40 && a <= 0.60, "null-effect " + m + " AUC " + fmt(a) + " outside [0.40, 0.60]");
    line += " " + m + "=" + fmt(a);
  }
  ck.note(line);
  return ck.verdict();
}

Verdict hybrid_directionality() {
  Check ck;
  SynthConfig sc;
  sc.n_patients = 600;
  sc.seed = 31;
  const auto gen = generate(sc);
  const auto lex = default_lexicon();
  const auto& rules = default_rule_set();

  // Simulated classifier: 20% of rows land in the band, the rest sit on the correct side 90% of the time.
  Rng rng(derive_seed(sc.seed, "acceptance/p_ml"));
  std::vector<std::string> ids;
  std::vector<double> p_ml;
  Labels y;
  for (const auto& l : gen.latent) {
    ids.push_back(l.patient_id);
    y.push_back(l.label_48);
    double p;
    if (unit_uniform(rng) < 0.2) {
      p = 0.2 + 0.4 * (0.001 + 0.998 * unit_uniform(rng));
    } else {
      const bool high = bernoulli(rng, 0.9) ? l.label_48 : !l.label_48;
      p = high ? 0.6 + 0.4 * unit_uniform(rng) : 0.2 * unit_uniform(rng);
    }
    p_ml.push_back(p);
  }

  auto endpoint = std::make_shared<MockEndpoint>([](const ChatRequest& r) { return mock_clinician_reply(r.messages.back().content); });
  std::size_t calls = 0;
  auto llm_for = [&](std::size_t i) {
    ++calls;
    const auto& rec = gen.cohort.records[i];
    const auto meds = backfill_doses(sorted_by_time(rec.medication_log), &lex);
    const auto scores = extract_scores(rec.pain_observations, rules);
    const auto prompt = build_prompt(rec, build_profile(meds, lex), scores, {}, Horizon::h48);
    return parse_probability(complete(endpoint, prompt));
  };

  const auto hybrid = fuse_cohort(ids, p_ml, llm_for);
  const std::size_t fusion_calls = calls;
  Labels pred_hyb, pred_llm;
  std::size_t in_band = 0, in_band_pos = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    pred_hyb.push_back(hybrid[i].predicted);
    in_band += hybrid[i].indicator;
    in_band_pos += hybrid[i].indicator && y[i];
    pred_llm.push_back(llm_for(i).p_llm >= 0.5);
  }
  const auto ml = sens_spec_acc(confusion(y, threshold_predictions(p_ml, 0.5)));
  const auto llm = sens_spec_acc(confusion(y, pred_llm));
  const auto hyb = sens_spec_acc(confusion(y, pred_hyb));
  const double s_ml = *ml.sensitivity.value(), s_hyb = *hyb.sensitivity.value();
  const double a_ml = *ml.accuracy.value(), a_llm = *llm.accuracy.value(), a_hyb = *hyb.accuracy.value();

  ck.expect(fusion_calls == in_band, "LLM queried outside the band");
  ck.expect(s_hyb >= s_ml, "hybrid sensitivity below ML-only");
  if (in_band_pos >= 10) ck.expect(s_hyb > s_ml, "no strict sensitivity gain with " + std::to_string(in_band_pos) + " in-band positives");
  ck.expect(a_hyb >= std::max(a_ml, a_llm) - 0.02, "hybrid accuracy more than 0.02 below max(ML, LLM)");
  ck.note("in-band " + fmt(static_cast<double>(in_band) / static_cast<double>(ids.size()), 2) + " (" + std::to_string(in_band_pos) +
          " positives); sens ML " + fmt(s_ml) + " -> hybrid " + fmt(s_hyb) + "; acc ML " + fmt(a_ml) + ", LLM " + fmt(a_llm) +
          ", hybrid " + fmt(a_hyb));
  return ck.verdict();
}

Verdict text_round_trip() {
  Check ck;
  const auto& rules = default_rule_set();
  std::size_t obs = 0;
  for (std::uint64_t seed : {101u, 102u, 103u}) {
    SynthConfig sc;
    sc.n_patients = 300;
    sc.seed = seed;
    const auto gen = generate(sc);
    for (std::size_t i = 0; i < gen.latent.size(); ++i) {
      const auto& rec = gen.cohort.records[i];
      const auto& lat = gen.latent[i];
      ck.expect(rec.pain_observations.size() == lat.observation_scores.size(), rec.patient_id + ": observation count");
      for (std::size_t k = 0; k < std::min(rec.pain_observations.size(), lat.observation_scores.size()); ++k, ++obs) {
        const auto s = observation_score(rec.pain_observations[k], rules);
        ck.expect(s && *s == lat.observation_scores[k], rec.patient_id + ": observation " + std::to_string(k) + " misread");
      }
      const auto scores = extract_scores(rec.pain_observations, rules);
      ck.expect(scores.nrs_24 == lat.nrs_24 && scores.nrs_48 == lat.nrs_48 && scores.nrs_72 == lat.nrs_72,
                rec.patient_id + ": window scores");
      const auto labels = binarize(scores, 4);
      ck.expect(labels == std::vector<PainLabel>{{Horizon::h48, lat.label_48}, {Horizon::h72, lat.label_72}},
                rec.patient_id + ": labels");
    }
  }
  ck.note(std::to_string(obs) + " observations recovered");
  return ck.verdict();
}

Verdict metric_identities() {
  Check ck;
  std::size_t undefined = 0;
  Rng rng(derive_seed(7, "acceptance/metrics"));
  for (int t = 0; t < 1000; ++t) {
    ConfusionCounts c{uniform_index(rng, 60), uniform_index(rng, 60), uniform_index(rng, 60), uniform_index(rng, 60)};
    if (t % 10 == 0) c.tp = c.fn = 0;
    if (t % 10 == 5) c.tn = c.fp = 0;
    if (c.total() == 0) c.tp = 1;
    const auto m = sens_spec_acc(c);
    const std::string tag = "matrix " + std::to_string(t);
    // exact identity in integers: acc = (sens * P + spec * N) / (P + N)
    ck.expect(m.accuracy.numerator == m.sensitivity.numerator + m.specificity.numerator, tag + ": numerator");
    ck.expect(m.accuracy.denominator == m.sensitivity.denominator + m.specificity.denominator, tag + ": denominator");
    ck.expect(m.sensitivity.denominator == c.positives() && m.specificity.denominator == c.negatives(), tag + ": class sizes");
    if (c.positives() == 0 || c.negatives() == 0) {
      ++undefined;
      const auto& u = c.positives() == 0 ? m.sensitivity : m.specificity;
      ck.expect(!u.defined() && !u.value(), tag + ": zero denominator not undefined");
    } else {
      const double P = static_cast<double>(c.positives()), N = static_cast<double>(c.negatives());
      const double lhs = *m.accuracy.value();
      const double rhs = (*m.sensitivity.value() * P + *m.specificity.value() * N) / (P + N);
      ck.expect(std::fabs(lhs - rhs) <= 4 * std::numeric_limits<double>::epsilon(), tag + ": floating identity");
    }
  }
  ck.note("1000 matrices, " + std::to_string(undefined) + " with an undefined rate");
  return ck.verdict();
}

std::map<std::string, std::string> full_run(const fs::path& out) {
  auto c = cli::load_config(std::string(PAINFC_SAMPLES_DIR) + "/config.json");
  c.output_dir = out.string();
  c.kb_dir = std::string(PAINFC_SAMPLES_DIR) + "/kb";
  c.lexicon = std::string(PAINFC_SAMPLES_DIR) + "/lexicon.txt";
  cli::validate(c);
  {
    QuietStdout quiet;
    cli::cmd_synth(c);
    cli::cmd_ingest(c);
    cli::cmd_train(c);
    cli::cmd_evaluate(c);
    cli::cmd_rag_index(c);
    cli::cmd_predict(c);
    cli::cmd_fuse(c);
    cli::cmd_report(c);
  }
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), out).generic_string();
    if (rel == "manifest.json" || rel == "fuse/llm_log.jsonl") continue;  // wall-clock timestamps
    files[rel] = slurp(e.path());
  }
  return files;
}

Verdict determinism() {
  Check ck;
  const auto root = scratch("determinism");
  const auto a = full_run(root / "a");
  const auto b = full_run(root / "b");
  ck.expect(a.size() == b.size(), "file sets differ");
  std::size_t models = 0, audits = 0, reports = 0;
  for (const auto& [rel, bytes] : a) {
    const auto it = b.find(rel);
    ck.expect(it != b.end(), rel + " missing from second run");
    if (it != b.end()) ck.expect(it->second == bytes, rel + " differs");
    models += rel.rfind("models/", 0) == 0;
    audits += rel.rfind("fuse/audit_", 0) == 0;
    reports += rel.rfind("report/", 0) == 0;
  }
  ck.expect(models > 0 && audits > 0 && reports > 0, "expected artifacts not produced");
  fs::remove_all(root);
  ck.note(std::to_string(a.size()) + " files identical (" + std::to_string(models) + " models, " + std::to_string(audits) +
          " audits, " + std::to_string(reports) + " report files)");
  return ck.verdict();
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "fusion formula fidelity", 1, fusion_fidelity},
      {2, "AUC oracle equivalence", 10, auc_oracle},
      {3, "SMOTE geometry", 10, smote_geometry},
      {4, "stratification", 5, stratification},
      {5, "retrieval exactness", 10, retrieval_exactness},
      {6, "logistic gradient check", 5, logistic_gradient},
      {7, "end-to-end sanity", 120, end_to_end_sanity},
      {8, "hybrid directionality", 60, hybrid_directionality},
      {9, "text round-trip", 5, text_round_trip},
      {10, "metric identities", 2, metric_identities},
      {11, "determinism", 240, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (v.pass && secs > c.budget_s) v = {false, "took " + fmt(secs, 2) + " s, budget " + fmt(c.budget_s, 0) + " s"};
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << " (" << fmt(secs, 2) << " s): " << v.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
