#pragma once

// Knowledge-base embedding, exact cosine top-k retrieval, and on-disk KB layout.
//
// Persisted KB directory:
//   manifest.json  {format, version, provider_id, dim, docs: [{doc_id, title, source, offset, length, text}]}
//   vectors.bin    docs x dim IEEE-754 float64 values, little-endian, row-major, no header

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "painfc/errors.hpp"
#include "painfc/log.hpp"
#include "painfc/random.hpp"
#include "painfc/strings.hpp"

namespace painfc {

using Embedding = std::vector<double>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Dense vector of size dim(). Throws ArgumentError on blank text.
  [[nodiscard]] virtual Embedding embed(std::string_view text) const = 0;
  [[nodiscard]] virtual std::string id() const = 0;
  [[nodiscard]] virtual std::size_t dim() const = 0;
};

/// Signed feature hashing of character trigrams (per word, space padded) and whole
/// words, L2-normalized. Offline and deterministic.
class HashedNgramEmbedder final : public EmbeddingProvider {
 public:
  explicit HashedNgramEmbedder(std::size_t dim = 64) : dim_(dim) {
    if (dim_ == 0) throw ArgumentError("embedding dimension must be > 0");
  }

  [[nodiscard]] Embedding embed(std::string_view text) const override {
    if (str::trim(text).empty()) throw ArgumentError("embed: text is empty");
    Embedding v(dim_, 0.0);
    auto add = [&](std::string_view feature) {
      const auto h = fnv1a64(feature);
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    };
    for (const auto& w : str::tokens(text)) {
      add("w:" + w);
      const std::string padded = " " + w + " ";
      for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add(std::string_view(padded).substr(i, 3));
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0.0) {
      // Every hashed feature cancelled out; fall back to a fixed axis so the output stays unit length.
      v[fnv1a64(text) % dim_] = 1.0;
      return v;
    }
    for (double& x : v) x /= n;
    return v;
  }

  [[nodiscard]] std::string id() const override { return "hashed-ngram-v1/d" + std::to_string(dim_); }
  [[nodiscard]] std::size_t dim() const override { return dim_; }

 private:
  std::size_t dim_;
};

inline Embedding embed(const EmbeddingProvider& provider, std::string_view text) { return provider.embed(text); }

inline double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

/// <u, v> / (|u| |v|). Zero vectors have no direction and raise UndefinedMetricError.
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ArgumentError("cosine: dimension mismatch");
  const double nu = std::sqrt(dot(u, u)), nv = std::sqrt(dot(v, v));
  if (nu == 0.0 || nv == 0.0) throw UndefinedMetricError("cosine: zero vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

struct KbDoc {
  std::string doc_id;
  std::string title;
  std::string source;  // originating file name, shared by all chunks of one file
  std::size_t offset = 0;
  std::size_t length = 0;
  std::string text;
  bool operator==(const KbDoc&) const = default;
};

struct KnowledgeBase {
  std::vector<KbDoc> docs;
  std::vector<Embedding> vectors;  // one per doc
  std::string provider_id;
  std::size_t dim = 0;

  [[nodiscard]] bool empty() const { return docs.empty(); }
  [[nodiscard]] const KbDoc* find(std::string_view id) const {
    for (const auto& d : docs)
      if (d.doc_id == id) return &d;
    return nullptr;
  }
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
  bool operator==(const ScoredDoc&) const = default;
};

/// Exact scan: highest cosine first, ties by doc_id ascending.
inline std::vector<ScoredDoc> top_k_vector(const KnowledgeBase& kb, std::span<const double> query, std::size_t k) {
  if (k < 1) throw ArgumentError("top_k: k must be >= 1");
  if (kb.empty()) {
    warn("top_k: knowledge base is empty, returning no context");
    return {};
  }
  if (query.size() != kb.dim) throw ArgumentError("top_k: query dimension differs from the knowledge base");
  std::vector<ScoredDoc> all;
  all.reserve(kb.docs.size());
  for (std::size_t i = 0; i < kb.docs.size(); ++i) all.push_back({kb.docs[i].doc_id, cosine(query, kb.vectors[i])});
  const auto order = [](const ScoredDoc& a, const ScoredDoc& b) {
    return a.score > b.score || (a.score == b.score && a.doc_id < b.doc_id);
  };
  const auto kk = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end(), order);
  all.resize(kk);
  return all;
}

inline std::vector<ScoredDoc> top_k(const KnowledgeBase& kb, const EmbeddingProvider& provider, std::string_view query,
                                    std::size_t k = 4) {
  if (k < 1) throw ArgumentError("top_k: k must be >= 1");
  if (str::trim(query).empty()) throw ArgumentError("top_k: query is empty");
  if (kb.empty()) {
    warn("top_k: knowledge base is empty, returning no context");
    return {};
  }
  if (provider.id() != kb.provider_id)
    throw ArgumentError("top_k: provider '" + provider.id() + "' differs from the index provider '" + kb.provider_id + "'");
  return top_k_vector(kb, provider.embed(query), k);
}

// ---------------------------------------------------------------------------
// ingestion

struct ChunkConfig {
  std::size_t chunk_chars = 1200;
  std::size_t overlap_chars = 200;
};

struct Chunk {
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Fixed-size character windows advancing by chunk_chars - overlap_chars; the last
/// window ends at the end of the text.
inline std::vector<Chunk> chunk_text(std::size_t text_len, const ChunkConfig& cfg) {
  if (cfg.chunk_chars == 0 || cfg.overlap_chars >= cfg.chunk_chars)
    throw ArgumentError("chunking needs chunk_chars > overlap_chars");
  std::vector<Chunk> out;
  if (text_len == 0) return out;
  const std::size_t step = cfg.chunk_chars - cfg.overlap_chars;
  for (std::size_t start = 0;; start += step) {
    const std::size_t len = std::min(cfg.chunk_chars, text_len - start);
    out.push_back({start, len});
    if (start + len >= text_len) break;
  }
  return out;
}

struct KbIngestResult {
  KnowledgeBase kb;
  std::vector<std::string> skipped;  // "<file>: <reason>"
};

inline std::string first_line_title(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = str::trim(line);
    while (!t.empty() && t.front() == '#') t.remove_prefix(1);
    t = str::trim(t);
    if (!t.empty()) return std::string(t);
  }
  return {};
}

/// Embeds every .txt / .md file of `dir` (sorted by name), chunk by chunk.
inline KbIngestResult ingest_kb(const std::filesystem::path& dir, const EmbeddingProvider& provider,
                                const ChunkConfig& chunking = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("knowledge-base directory not found: " + dir.string());
  KbIngestResult res;
  res.kb.provider_id = provider.id();
  res.kb.dim = provider.dim();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = str::lower(e.path().extension().string());
    if (e.is_regular_file() && (ext == ".txt" || ext == ".md")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) {
      res.skipped.push_back(f.filename().string() + ": unreadable");
      continue;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (str::trim(text).empty()) {
      res.skipped.push_back(f.filename().string() + ": empty");
      continue;
    }
    const auto title = first_line_title(text);
    const auto chunks = chunk_text(text.size(), chunking);
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      auto piece = text.substr(chunks[c].offset, chunks[c].length);
      if (str::trim(piece).empty()) continue;
      KbDoc d{f.filename().string() + "#" + std::to_string(c), title, f.filename().string(), chunks[c].offset,
              chunks[c].length, std::move(piece)};
      res.kb.vectors.push_back(provider.embed(d.text));
      res.kb.docs.push_back(std::move(d));
    }
  }
  if (res.kb.empty()) warn("ingest_kb: no documents found in " + dir.string());
  return res;
}

inline void save_kb(const KnowledgeBase& kb, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["format"] = "painfc-kb";
  m["version"] = 1;
  m["provider_id"] = kb.provider_id;
  m["dim"] = kb.dim;
  m["vector_layout"] = "float64-le-row-major";
  auto& docs = m["docs"] = nlohmann::json::array();
  for (const auto& d : kb.docs)
    docs.push_back({{"doc_id", d.doc_id}, {"title", d.title}, {"source", d.source}, {"offset", d.offset},
                    {"length", d.length}, {"text", d.text}});
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write KB manifest in " + dir.string());
    out << m.dump(2) << '\n';
  }
  std::ofstream out(dir / "vectors.bin", std::ios::binary);
  if (!out) throw IoError("cannot write KB vectors in " + dir.string());
  for (const auto& v : kb.vectors)
    for (double x : v) {
      auto bits = std::bit_cast<std::uint64_t>(x);
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      out.write(bytes, 8);
    }
}

inline KnowledgeBase load_kb(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json", std::ios::binary);
  if (!min) throw IoError("KB manifest not found: " + (dir / "manifest.json").string());
  const auto m = nlohmann::json::parse(min);
  if (m.value("format", "") != "painfc-kb" || m.value("version", 0) != 1) throw SchemaError("not a painfc KB manifest");
  KnowledgeBase kb;
  kb.provider_id = m.at("provider_id").get<std::string>();
  kb.dim = m.at("dim").get<std::size_t>();
  for (const auto& d : m.at("docs"))
    kb.docs.push_back({d.at("doc_id").get<std::string>(), d.at("title").get<std::string>(), d.at("source").get<std::string>(),
                       d.at("offset").get<std::size_t>(), d.at("length").get<std::size_t>(), d.at("text").get<std::string>()});
  std::ifstream vin(dir / "vectors.bin", std::ios::binary);
  if (!vin) throw IoError("KB vectors not found: " + (dir / "vectors.bin").string());
  for (std::size_t i = 0; i < kb.docs.size(); ++i) {
    Embedding v(kb.dim);
    for (auto& x : v) {
      unsigned char bytes[8];
      if (!vin.read(reinterpret_cast<char*>(bytes), 8)) throw SchemaError("KB vector file is truncated");
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      x = std::bit_cast<double>(bits);
    }
    kb.vectors.push_back(std::move(v));
  }
  return kb;
}

}  // namespace painfc
