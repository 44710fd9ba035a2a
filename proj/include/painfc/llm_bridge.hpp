#pragma once

// Prompt construction from a patient record + retrieved guideline chunks, chat
// completion with bounded retries, and parsing of the tiered answer into p_LLM.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "painfc/data_model.hpp"
#include "painfc/errors.hpp"
#include "painfc/pharma_ladder.hpp"
#include "painfc/rag_retriever.hpp"
#include "painfc/strings.hpp"
#include "painfc/text_extract.hpp"

namespace painfc {

// ---------------------------------------------------------------------------
// templates

/// Placeholders: {{EHR}} {{MEDICATION_RECORDS}} {{CHIEF_COMPLAINT}} {{CLINICAL_NOTES}}
/// {{RETRIEVED_CONTEXT}} {{HORIZON}} {{BASELINE_NRS}} {{LAST24H_DRUGS}}
struct PromptTemplate {
  std::string name;
  std::string system;
  std::string body;
  std::vector<std::string> required_sections;  // headers that must appear exactly once
};

inline constexpr std::string_view kMedicationConstraint = "maintain current medication";

inline PromptTemplate prompt_template_v3() {
  return {"v3",
          "You are a clinical decision-support assistant for inpatient cancer pain management. "
          "Answer only from the supplied patient data and reference context.",
          "## Patient data\n"
          "### EHR\n{{EHR}}\n"
          "### Medication Records\n{{MEDICATION_RECORDS}}\n"
          "### Chief Complaint\n{{CHIEF_COMPLAINT}}\n"
          "### Clinical Notes\n{{CLINICAL_NOTES}}\n"
          "\n## Retrieved context\n{{RETRIEVED_CONTEXT}}\n"
          "\n## Task\n"
          "As a medical expert, comprehensively analyze the [Patient data] and predict the probability of the patient "
          "having an NRS pain score >= 4 within {{HORIZON}}, assuming the care team will maintain current medication. "
          "Current NRS baseline: {{BASELINE_NRS}}. Output the results according to the framework below.\n"
          "\n## Data Prep.\n"
          "1. Key lab/hematologic/metabolic/tumor markers\n"
          "2. Medication analysis:\n"
          "   - Last 24h drugs (name/dose): {{LAST24H_DRUGS}}\n"
          "   - Pharmacodynamics: metabolic risk + inflammation\n"
          "\n## Output format\n"
          "3. Probability tier: High (>70%), Medium (30-70%), Low (<30%); state the tier and a percentage.\n"
          "4. Main risk factors: comma-separated list\n",
          {"## Patient data", "### EHR", "### Medication Records", "### Chief Complaint", "### Clinical Notes",
           "## Retrieved context", "## Task", "## Data Prep.", "## Output format"}};
}

/// First iteration: bare instruction over the patient data.
inline PromptTemplate prompt_template_v1() {
  return {"v1", "You are a helpful medical assistant.",
          "## Patient data\n{{EHR}}\n{{MEDICATION_RECORDS}}\n{{CHIEF_COMPLAINT}}\n{{CLINICAL_NOTES}}\n"
          "\n## Retrieved context\n{{RETRIEVED_CONTEXT}}\n"
          "\n## Task\nPredict the probability that this patient has pain (NRS >= 4) within {{HORIZON}}.\n",
          {"## Patient data", "## Retrieved context", "## Task"}};
}

/// Second iteration: adds medication timing and the first-day NRS.
inline PromptTemplate prompt_template_v2() {
  return {"v2", "You are a helpful medical assistant.",
          "## Patient data\n{{EHR}}\n"
          "### Medication Records\n{{MEDICATION_RECORDS}}\n"
          "### Last 24h drugs\n{{LAST24H_DRUGS}}\n"
          "\n## Retrieved context\n{{RETRIEVED_CONTEXT}}\n"
          "\n## Task\nCurrent NRS: {{BASELINE_NRS}}. Considering when each analgesic was last given, predict the "
          "probability of NRS >= 4 within {{HORIZON}} if the team will maintain current medication.\n"
          "\n## Output format\nProbability tier (High/Medium/Low) and a percentage.\n",
          {"## Patient data", "### Medication Records", "## Retrieved context", "## Task", "## Output format"}};
}

inline PromptTemplate prompt_template_by_name(std::string_view name) {
  if (name == "v1") return prompt_template_v1();
  if (name == "v2") return prompt_template_v2();
  if (name == "v3") return prompt_template_v3();
  throw ArgumentError("unknown prompt template '" + std::string(name) + "' (expected v1, v2 or v3)");
}

/// Template file: first line `system: <preamble>`, then the body. Lines starting with
/// `#!section ` declare required section headers.
inline PromptTemplate load_prompt_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read prompt template: " + path);
  PromptTemplate t;
  t.name = path;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first && line.rfind("system:", 0) == 0) {
      t.system = std::string(str::trim(line.substr(7)));
    } else if (line.rfind("#!section ", 0) == 0) {
      t.required_sections.emplace_back(str::trim(line.substr(10)));
    } else {
      t.body += line + "\n";
    }
    first = false;
  }
  return t;
}

// ---------------------------------------------------------------------------
// prompt building

struct RetrievedDoc {
  std::string doc_id;
  double score = 0.0;
  std::string title;
  std::string text;
};

inline std::vector<RetrievedDoc> resolve_docs(const KnowledgeBase& kb, const std::vector<ScoredDoc>& hits) {
  std::vector<RetrievedDoc> out;
  for (const auto& h : hits) {
    const auto* d = kb.find(h.doc_id);
    if (!d) throw ArgumentError("retrieved doc '" + h.doc_id + "' is not in the knowledge base");
    out.push_back({h.doc_id, h.score, d->title, d->text});
  }
  return out;
}

struct PromptConfig {
  PromptTemplate tmpl = prompt_template_v3();
  std::size_t char_budget = 16000;
};

struct PromptBundle {
  std::string system;
  std::string patient_block;  // EHR summary; also the retrieval query
  std::string context_block;
  std::string user;           // filled template
  Horizon horizon = Horizon::h48;
  bool no_context = false;
  bool truncated = false;       // clinical notes were dropped to fit the budget
  std::size_t notes_dropped = 0;
  bool over_budget = false;     // still above budget with every note dropped
  bool operator==(const PromptBundle&) const = default;
};

/// Data available when the forecast is made: everything up to 24 h before the horizon.
inline double prompt_cutoff_hours(Horizon h) { return horizon_hours(h) - 24.0; }

inline std::string lab_unit(std::string_view code) {
  static const std::map<std::string, std::string, std::less<>> units{
      {"AST", "U/L"},  {"ALT", "U/L"},   {"GGT", "U/L"},      {"HCT", "%"},    {"MCV", "fL"},
      {"RBC", "10^12/L"}, {"MCH", "pg"}, {"CRP", "mg/L"},     {"ALB", "g/L"},  {"WBC", "10^9/L"},
      {"BUN", "mmol/L"}, {"TNF_alpha", "pg/mL"}, {"IL6", "pg/mL"}, {"CREA", "umol/L"}};
  auto it = units.find(code);
  return it == units.end() ? std::string{} : it->second;
}

/// Structured EHR summary: demographics, staging, labs and the current NRS.
inline std::string patient_summary(const PatientRecord& r, const PainWindowScores& scores, Horizon h) {
  std::ostringstream s;
  s << "Patient " << r.patient_id << ": ";
  s << "age " << (r.age ? std::to_string(*r.age) : "unknown");
  s << "; sex " << (r.sex ? std::string(to_string(*r.sex)) : "unknown");
  s << "; smoking " << (r.smoking ? std::string(to_string(*r.smoking)) : "unknown");
  s << "; pathology " << (r.pathology ? std::string(to_string(*r.pathology)) : "unknown");
  auto ord = [](const std::optional<int>& v) { return !v || *v == kUnknownOrdinal ? std::string("unknown") : std::to_string(*v); };
  s << "; TNM stage " << ord(r.tnm_stage) << "; N class " << ord(r.n_class) << ".\n";
  if (!r.labs.empty()) {
    s << "Labs:";
    bool first = true;
    for (const auto& [code, v] : r.labs) {
      s << (first ? " " : ", ") << code << ' ' << str::fmt_fixed(v, 2);
      if (auto u = lab_unit(code); !u.empty()) s << ' ' << u;
      first = false;
    }
    s << ".\n";
  }
  s << "Pain scores so far: 0-24h " << (scores.nrs_24 ? std::to_string(*scores.nrs_24) : "not recorded");
  if (h == Horizon::h72) s << ", 24-48h " << (scores.nrs_48 ? std::to_string(*scores.nrs_48) : "not recorded");
  s << ".\n";
  return s.str();
}

inline std::optional<int> baseline_nrs(const PainWindowScores& s, Horizon h) {
  if (h == Horizon::h72 && s.nrs_48) return s.nrs_48;
  return s.nrs_24;
}

inline std::string medication_block(const PatientRecord& r, const TierDoseProfile& profile, double cutoff) {
  std::ostringstream s;
  for (const auto& e : r.medication_log) {
    if (e.time_h > cutoff) continue;
    s << "- t=" << str::fmt_fixed(e.time_h, 1) << "h " << e.drug_text;
    if (e.dose_mg) s << " (" << str::fmt_double(*e.dose_mg) << " mg)";
    if (e.route) s << " [" << *e.route << "]";
    s << '\n';
  }
  static constexpr const char* kTierNames[] = {"non-opioid", "moderate opioid", "strong opioid"};
  for (std::size_t w = 0; w < profile.windows.size(); ++w) {
    if (profile.windows[w] > cutoff) continue;
    s << "Ladder exposure 0-" << str::fmt_double(profile.windows[w]) << "h:";
    for (auto t : kAllTiers) {
      const auto& c = profile.at(t, w);
      s << " tier " << tier_number(t) << " (" << kTierNames[tier_index(t)] << ") "
        << (c.used ? "used, " + str::fmt_double(c.total_mg) + " mg" : std::string("not used")) << ';';
    }
    s << '\n';
  }
  auto out = s.str();
  return out.empty() ? "No analgesics recorded.\n" : out;
}

inline std::string last24h_drugs(const PatientRecord& r, double cutoff) {
  std::vector<std::string> items;
  for (const auto& e : r.medication_log)
    if (e.time_h <= cutoff && e.time_h > cutoff - 24.0)
      items.push_back(e.drug_text + (e.dose_mg ? " " + str::fmt_double(*e.dose_mg) + " mg" : std::string{}));
  return items.empty() ? "none" : str::join(items, "; ");
}

namespace detail {
inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
  return s;
}

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = 0; (pos = hay.find(needle, pos)) != std::string_view::npos; pos += needle.size()) {
    // Count only header lines, i.e. matches at the start of a line and followed by end of line.
    const bool line_start = pos == 0 || hay[pos - 1] == '\n';
    const bool line_end = pos + needle.size() == hay.size() || hay[pos + needle.size()] == '\n';
    if (line_start && line_end) ++n;
  }
  return n;
}
}  // namespace detail

namespace detail {
/// Drops leading '#' marks so retrieved markdown cannot masquerade as a prompt section.
inline std::string strip_headings(std::string_view text) {
  std::string out;
  for (const auto& line : str::split(text, '\n')) {
    std::string_view l = line;
    if (!l.empty() && l.front() == '#') {
      while (!l.empty() && l.front() == '#') l.remove_prefix(1);
      l = str::trim(l);
    }
    out.append(l);
    out += '\n';
  }
  if (!out.empty()) out.pop_back();
  return out;
}
}  // namespace detail

/// Fills the template. If the result exceeds the budget, clinical notes are dropped
/// oldest-first until it fits (or none remain).
inline PromptBundle build_prompt(const PatientRecord& record, const TierDoseProfile& profile, const PainWindowScores& scores,
                                 const std::vector<RetrievedDoc>& docs, Horizon horizon, const PromptConfig& cfg = {}) {
  const double cutoff = prompt_cutoff_hours(horizon);
  PromptBundle b;
  b.horizon = horizon;
  b.system = cfg.tmpl.system;
  b.patient_block = patient_summary(record, scores, horizon);
  b.no_context = docs.empty();
  if (docs.empty()) {
    b.context_block = "(no reference context retrieved)\n";
  } else {
    std::ostringstream c;
    for (std::size_t i = 0; i < docs.size(); ++i)
      c << "[" << (i + 1) << "] " << docs[i].title << " (" << docs[i].doc_id << ", similarity "
        << str::fmt_fixed(docs[i].score, 3) << ")\n" << detail::strip_headings(str::trim(docs[i].text)) << "\n";
    b.context_block = c.str();
  }

  std::vector<const ClinicalNote*> notes;
  for (const auto& n : record.clinical_notes)
    if (n.time_h <= cutoff) notes.push_back(&n);
  std::stable_sort(notes.begin(), notes.end(), [](auto* a, auto* c) { return a->time_h < c->time_h; });

  const auto baseline = baseline_nrs(scores, horizon);
  auto render = [&](std::size_t skip) {
    std::ostringstream ns;
    for (std::size_t i = skip; i < notes.size(); ++i)
      ns << "- t=" << str::fmt_fixed(notes[i]->time_h, 1) << "h " << notes[i]->text << '\n';
    std::string notes_text = ns.str();
    if (notes_text.empty()) notes_text = "No clinical notes.\n";
    std::string u = cfg.tmpl.body;
    u = detail::replace_all(std::move(u), "{{EHR}}", str::trim(b.patient_block));
    u = detail::replace_all(std::move(u), "{{MEDICATION_RECORDS}}", str::trim(medication_block(record, profile, cutoff)));
    u = detail::replace_all(std::move(u), "{{CHIEF_COMPLAINT}}",
                            record.chief_complaint ? std::string(str::trim(*record.chief_complaint)) : "Not documented.");
    u = detail::replace_all(std::move(u), "{{CLINICAL_NOTES}}", str::trim(notes_text));
    u = detail::replace_all(std::move(u), "{{RETRIEVED_CONTEXT}}", str::trim(b.context_block));
    u = detail::replace_all(std::move(u), "{{HORIZON}}", std::to_string(horizon_hours(horizon)) + "h");
    u = detail::replace_all(std::move(u), "{{BASELINE_NRS}}", baseline ? std::to_string(*baseline) : "not recorded");
    u = detail::replace_all(std::move(u), "{{LAST24H_DRUGS}}", last24h_drugs(record, cutoff));
    return u;
  };

  std::size_t skip = 0;
  b.user = render(0);
  while (b.system.size() + b.user.size() > cfg.char_budget && skip < notes.size()) {
    ++skip;
    b.user = render(skip);
  }
  b.notes_dropped = skip;
  b.truncated = skip > 0;
  b.over_budget = b.system.size() + b.user.size() > cfg.char_budget;
  return b;
}

/// Each required section header of the template occurs exactly once in the prompt.
inline bool prompt_sections_intact(const PromptBundle& b, const PromptTemplate& t) {
  for (const auto& s : t.required_sections)
    if (detail::count_occurrences(b.user, s) != 1) return false;
  return true;
}

// ---------------------------------------------------------------------------
// endpoint

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

inline ChatRequest make_request(const PromptBundle& b, std::string model) {
  return {std::move(model), {{"system", b.system}, {"user", b.user}}, 0.0};
}

inline nlohmann::json to_json(const ChatRequest& r) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : r.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", r.model}, {"messages", std::move(msgs)}, {"temperature", r.temperature}};
}

/// Chat-completion transport. send() returns the assistant message text or throws TransportError.
class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  virtual std::string send(const ChatRequest& request, std::chrono::milliseconds timeout) = 0;
};

/// In-process endpoint backed by a callable; used by tests and offline runs.
class MockEndpoint final : public ChatEndpoint {
 public:
  using Handler = std::function<std::string(const ChatRequest&)>;
  explicit MockEndpoint(Handler h) : handler_(std::move(h)) {}
  std::string send(const ChatRequest& request, std::chrono::milliseconds) override {
    ++calls_;
    return handler_(request);
  }
  [[nodiscard]] std::size_t calls() const { return calls_.load(); }

 private:
  Handler handler_;
  std::atomic<std::size_t> calls_{0};
};

struct RetryPolicy {
  int max_retries = 2;  // attempts = max_retries + 1
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
  std::chrono::milliseconds request_timeout{60000};

  [[nodiscard]] std::chrono::milliseconds backoff(int retry_index) const {
    double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, retry_index);
    ms = std::min(ms, static_cast<double>(max_backoff.count()));
    return std::chrono::milliseconds(static_cast<long long>(ms));
  }
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

/// Line-delimited JSON audit of every attempt. Thread-safe.
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(const std::string& path) : out_(std::make_unique<std::ofstream>(path, std::ios::app)) {
    if (!*out_) throw IoError("cannot open audit log: " + path);
  }
  void record(nlohmann::json entry) {
    std::lock_guard lock(mu_);
    if (out_) *out_ << entry.dump() << '\n' << std::flush;
    entries_.push_back(std::move(entry));
  }
  [[nodiscard]] std::vector<nlohmann::json> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

 private:
  std::unique_ptr<std::ofstream> out_;
  mutable std::mutex mu_;
  std::vector<nlohmann::json> entries_;
};

struct LlmResponse {
  std::string raw;
  std::optional<std::string> tier;            // "high" | "medium" | "low"
  std::optional<double> explicit_probability;
  std::string rationale;
  std::vector<std::string> risk_factors;
  int attempts = 0;
  double latency_ms = 0.0;
};

namespace detail {

/// Runs endpoint.send on a worker thread and gives up after `timeout`. A hung worker
/// is detached; it only touches state it co-owns through shared_ptr.
inline std::string send_with_timeout(const std::shared_ptr<ChatEndpoint>& endpoint, const ChatRequest& req,
                                     std::chrono::milliseconds timeout) {
  auto promise = std::make_shared<std::promise<std::string>>();
  auto fut = promise->get_future();
  std::thread([endpoint, req, timeout, promise] {
    try {
      promise->set_value(endpoint->send(req, timeout));
    } catch (...) {
      promise->set_exception(std::current_exception());
    }
  }).detach();
  if (fut.wait_for(timeout) != std::future_status::ready)
    throw TransportError("request timed out after " + std::to_string(timeout.count()) + " ms");
  return fut.get();
}

}  // namespace detail

inline LlmResponse parse_response(std::string raw);

/// One completion with bounded retries and exponential backoff on TransportError.
inline LlmResponse complete(const std::shared_ptr<ChatEndpoint>& endpoint, const PromptBundle& prompt,
                            const RetryPolicy& policy = {}, const std::string& model = "default",
                            AuditLog* audit = nullptr, const Sleeper& sleep = real_sleep, const std::string& tag = {}) {
  const auto req = make_request(prompt, model);
  std::string last_error;
  for (int attempt = 1; attempt <= policy.max_retries + 1; ++attempt) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto text = detail::send_with_timeout(endpoint, req, policy.request_timeout);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (audit)
        audit->record({{"tag", tag}, {"attempt", attempt}, {"ok", true}, {"latency_ms", ms}, {"request", to_json(req)},
                       {"response", text}});
      auto resp = parse_response(std::move(text));
      resp.attempts = attempt;
      resp.latency_ms = ms;
      return resp;
    } catch (const TransportError& e) {
      last_error = e.what();
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (audit)
        audit->record({{"tag", tag}, {"attempt", attempt}, {"ok", false}, {"latency_ms", ms}, {"request", to_json(req)},
                       {"error", last_error}});
      if (attempt <= policy.max_retries) sleep(policy.backoff(attempt - 1));
    }
  }
  throw TransportError("chat completion failed after " + std::to_string(policy.max_retries + 1) +
                           " attempts: " + last_error,
                       policy.max_retries + 1);
}

struct CompletionOutcome {
  std::optional<LlmResponse> response;
  std::string error;  // set when every attempt failed
};

/// Completes every prompt with at most `max_parallel` requests in flight.
/// Failures are reported per prompt instead of aborting the batch.
inline std::vector<CompletionOutcome> complete_many(const std::shared_ptr<ChatEndpoint>& endpoint,
                                                    const std::vector<PromptBundle>& prompts, const RetryPolicy& policy,
                                                    const std::string& model, AuditLog* audit, std::size_t max_parallel,
                                                    const Sleeper& sleep = real_sleep,
                                                    const std::vector<std::string>& tags = {}) {
  std::vector<CompletionOutcome> out(prompts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < prompts.size();) {
      try {
        out[i].response = complete(endpoint, prompts[i], policy, model, audit, sleep, i < tags.size() ? tags[i] : std::string{});
      } catch (const TransportError& e) {
        out[i].error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(max_parallel, 1, std::max<std::size_t>(1, prompts.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

// ---------------------------------------------------------------------------
// parsing

enum class ProbabilityProvenance { explicit_number, tier_midpoint, parse_failure_default };

inline std::string_view to_string(ProbabilityProvenance p) {
  switch (p) {
    case ProbabilityProvenance::explicit_number: return "explicit_number";
    case ProbabilityProvenance::tier_midpoint: return "tier_midpoint";
    default: return "parse_failure_default";
  }
}

struct TierMidpoints {
  double high = 0.85;
  double medium = 0.50;
  double low = 0.15;
  double failure_default = 0.50;
};

struct LlmProbability {
  double p_llm = 0.5;
  ProbabilityProvenance provenance = ProbabilityProvenance::parse_failure_default;
};

namespace detail {

/// First percentage or probability-labelled decimal that is a point estimate
/// (not a "<30%" bound or the upper end of a "30-70%" range).
inline std::optional<double> find_explicit_probability(const std::string& text) {
  static const std::regex pct(R"((\d{1,3}(?:\.\d+)?)\s*(?:\\?%|percent\b))", std::regex::icase);
  static const std::regex dec(R"((?:probability|likelihood|chance|risk)[^\d\n]{0,30}?\b(0?\.\d+|1\.0+)\b)", std::regex::icase);
  struct Hit {
    std::size_t pos;
    double value;
  };
  std::optional<Hit> best;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), pct); it != std::sregex_iterator(); ++it) {
    const auto pos = static_cast<std::size_t>(it->position(1));
    std::size_t k = pos;
    while (k > 0 && text[k - 1] == ' ') --k;
    if (k > 0) {
      const char prev = text[k - 1];
      if (prev == '<' || prev == '>' || prev == '=' || prev == '~') continue;
      if ((prev == '-' || prev == '/') && k >= 2 && std::isdigit(static_cast<unsigned char>(text[k - 2]))) continue;
      if (k >= 3 && static_cast<unsigned char>(text[k - 1]) >= 0x80) continue;  // unicode comparison / dash glyphs
    }
    const auto v = str::to_double((*it)[1].str());
    if (!v || *v > 100.0) continue;
    best = Hit{pos, *v / 100.0};
    break;
  }
  for (auto it = std::sregex_iterator(text.begin(), text.end(), dec); it != std::sregex_iterator(); ++it) {
    const auto pos = static_cast<std::size_t>(it->position(1));
    const auto v = str::to_double((*it)[1].str());
    if (!v || *v < 0.0 || *v > 1.0) continue;
    if (!best || pos < best->pos) best = Hit{pos, *v};
    break;
  }
  if (best) return best->value;
  return std::nullopt;
}

inline std::optional<std::string> find_tier(const std::string& text) {
  static const std::regex qualified(R"(\b(high|medium|moderate|low)\s+(?:probability|risk|tier|likelihood|chance)\b)",
                                    std::regex::icase);
  static const std::regex labelled(R"((?:probability|risk|tier|likelihood)\s*(?:tier|level)?\s*[:=]\s*\**\s*(high|medium|moderate|low)\b)",
                                   std::regex::icase);
  static const std::regex bare(R"(\b(high|medium|low)\b)", std::regex::icase);
  std::smatch m;
  for (const auto* re : {&qualified, &labelled, &bare}) {
    if (std::regex_search(text, m, *re)) {
      auto t = str::lower(m[1].str());
      return t == "moderate" ? std::string("medium") : t;
    }
  }
  return std::nullopt;
}

inline std::vector<std::string> find_risk_factors(const std::string& text) {
  static const std::regex line(R"(risk factors?\s*[:\-]\s*([^\n]*))", std::regex::icase);
  std::smatch m;
  std::vector<std::string> out;
  if (!std::regex_search(text, m, line)) return out;
  std::string items = m[1].str();
  for (char& c : items)
    if (c == ';') c = ',';
  for (auto& part : str::split(items, ',')) {
    auto t = str::trim(part);
    while (!t.empty() && (t.back() == '.' || t.back() == '_')) t.remove_suffix(1);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace detail

inline LlmResponse parse_response(std::string raw) {
  LlmResponse r;
  r.raw = std::move(raw);
  r.explicit_probability = detail::find_explicit_probability(r.raw);
  r.tier = detail::find_tier(r.raw);
  r.risk_factors = detail::find_risk_factors(r.raw);
  r.rationale = std::string(str::trim(r.raw));
  return r;
}

/// Explicit number > tier keyword midpoint > 0.5 default. Total: never throws.
inline LlmProbability parse_probability(const LlmResponse& resp, const TierMidpoints& mid = {}) {
  if (auto p = detail::find_explicit_probability(resp.raw); p && *p >= 0.0 && *p <= 1.0)
    return {*p, ProbabilityProvenance::explicit_number};
  if (auto t = detail::find_tier(resp.raw)) {
    const double v = *t == "high" ? mid.high : (*t == "low" ? mid.low : mid.medium);
    return {v, ProbabilityProvenance::tier_midpoint};
  }
  return {mid.failure_default, ProbabilityProvenance::parse_failure_default};
}

inline LlmProbability parse_probability(std::string raw, const TierMidpoints& mid = {}) {
  return parse_probability(parse_response(std::move(raw)), mid);
}

}  // namespace painfc
