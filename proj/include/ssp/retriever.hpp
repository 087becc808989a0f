// SPDX-License-Identifier: Apache-2.0
//
// Lexical BM25 search over a small document corpus. This stands in for the
// dense retriever used at full scale: the rest of the engine only needs a
// search tool that returns the top-k documents for a query.
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ssp {

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;

  bool operator==(const Document&) const = default;
};

struct RetrievalHit {
  Document document;
  double score = 0.0;
};

struct IndexStats {
  std::size_t num_docs = 0;
  std::size_t num_terms = 0;
  double avg_doc_len = 0.0;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

inline constexpr std::size_t kDefaultTopK = 3;

class IngestionError : public std::runtime_error {
 public:
  IngestionError(std::size_t line, const std::string& what)
      : std::runtime_error(what), line_(line) {}
  // 1-based line number, or 0 when the problem is not tied to one line.
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InvalidQuery : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Lowercases and splits on runs of non-alphanumeric bytes. No stemming, no
// stopwords. Bytes >= 0x80 are treated as alphanumeric so UTF-8 words survive.
std::vector<std::string> tokenize(std::string_view text);

// Reads a JSON-lines corpus: one {"id","title","text"} object per line.
std::vector<Document> read_corpus(const std::filesystem::path& path);
std::vector<Document> parse_corpus(std::string_view contents);

class Bm25Index {
 public:
  static Bm25Index build(std::vector<Document> docs, Bm25Params params = {});
  static Bm25Index from_corpus_file(const std::filesystem::path& path,
                                    Bm25Params params = {});

  const IndexStats& stats() const { return stats_; }
  const Bm25Params& params() const { return params_; }
  std::size_t size() const { return docs_.size(); }
  const Document& document(std::size_t i) const { return docs_[i]; }
  const std::vector<Document>& documents() const { return docs_; }
  std::optional<std::size_t> find(std::string_view doc_id) const;

  // Top-k hits with score > 0, sorted by score descending then doc_id
  // ascending. Throws InvalidQuery when the query has no tokens.
  std::vector<RetrievalHit> retrieve(std::string_view query,
                                     std::size_t k = kDefaultTopK) const;

  // One hit list per query, computed in parallel. Invalid queries yield an
  // empty list rather than throwing.
  std::vector<std::vector<RetrievalHit>> retrieve_batch(
      std::span<const std::string> queries, std::size_t k = kDefaultTopK) const;

  // Serial reference for retrieve_batch.
  std::vector<std::vector<RetrievalHit>> retrieve_batch_serial(
      std::span<const std::string> queries, std::size_t k = kDefaultTopK) const;

  double idf(std::string_view term) const;

  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path);

 private:
  struct Posting {
    std::size_t doc;
    std::size_t tf;
  };

  Bm25Index() = default;
  void finalize();
  std::vector<RetrievalHit> retrieve_terms(const std::vector<std::string>& terms,
                                           std::size_t k) const;

  Bm25Params params_;
  std::vector<Document> docs_;
  std::vector<std::size_t> doc_len_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<std::string, std::size_t> id_lookup_;
  IndexStats stats_;
};

}  // namespace ssp
