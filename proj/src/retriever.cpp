// SPDX-License-Identifier: Apache-2.0
#include "ssp/retriever.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "ssp/common.hpp"

namespace ssp {

namespace {

bool is_token_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }

bool hit_before(const RetrievalHit& a, const RetrievalHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.document.doc_id < b.document.doc_id;
}

std::vector<std::string> distinct_in_order(std::vector<std::string> terms) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& t : terms) {
    if (seen.insert(t).second) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<Document> parse_corpus(std::string_view contents) {
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestionError(line_no, "corpus line " + std::to_string(line_no) +
                                        ": malformed JSON (" + e.what() + ")");
    }
    auto field = [&](const char* key) -> std::string {
      if (!rec.is_object() || !rec.contains(key) || !rec[key].is_string()) {
        throw IngestionError(line_no, "corpus line " + std::to_string(line_no) +
                                          ": missing string field \"" + key + "\"");
      }
      return rec[key].get<std::string>();
    };
    Document doc{field("id"), field("title"), field("text")};
    if (trim(doc.title).empty() || trim(doc.text).empty()) {
      throw IngestionError(line_no, "corpus line " + std::to_string(line_no) +
                                        ": title and text must be non-empty");
    }
    if (!ids.insert(doc.doc_id).second) {
      throw IngestionError(line_no, "corpus line " + std::to_string(line_no) +
                                        ": duplicate doc id \"" + doc.doc_id + "\"");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(0, "cannot open corpus file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str());
}

Bm25Index Bm25Index::build(std::vector<Document> docs, Bm25Params params) {
  Bm25Index idx;
  idx.params_ = params;
  idx.docs_ = std::move(docs);
  idx.finalize();
  return idx;
}

Bm25Index Bm25Index::from_corpus_file(const std::filesystem::path& path,
                                      Bm25Params params) {
  return build(read_corpus(path), params);
}

void Bm25Index::finalize() {
  doc_len_.assign(docs_.size(), 0);
  postings_.clear();
  id_lookup_.clear();
  std::size_t total_len = 0;
  for (std::size_t d = 0; d < docs_.size(); ++d) {
    if (!id_lookup_.emplace(docs_[d].doc_id, d).second) {
      throw IngestionError(0, "duplicate doc id \"" + docs_[d].doc_id + "\"");
    }
    auto toks = tokenize(docs_[d].title + " " + docs_[d].text);
    doc_len_[d] = toks.size();
    total_len += toks.size();
    std::map<std::string, std::size_t> tf;
    for (auto& t : toks) ++tf[t];
    for (auto& [term, count] : tf) postings_[term].push_back({d, count});
  }
  stats_.num_docs = docs_.size();
  stats_.num_terms = postings_.size();
  stats_.avg_doc_len =
      docs_.empty() ? 0.0 : static_cast<double>(total_len) / static_cast<double>(docs_.size());
}

std::optional<std::size_t> Bm25Index::find(std::string_view doc_id) const {
  auto it = id_lookup_.find(std::string(doc_id));
  if (it == id_lookup_.end()) return std::nullopt;
  return it->second;
}

double Bm25Index::idf(std::string_view term) const {
  auto it = postings_.find(std::string(term));
  const double n = static_cast<double>(docs_.size());
  const double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::vector<RetrievalHit> Bm25Index::retrieve_terms(const std::vector<std::string>& terms,
                                                    std::size_t k) const {
  std::vector<double> score(docs_.size(), 0.0);
  std::vector<std::size_t> touched;
  const double k1 = params_.k1, b = params_.b;
  for (const auto& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double w = idf(term);
    for (const Posting& p : it->second) {
      const double tf = static_cast<double>(p.tf);
      const double norm = k1 * (1.0 - b + b * static_cast<double>(doc_len_[p.doc]) / stats_.avg_doc_len);
      if (score[p.doc] == 0.0) touched.push_back(p.doc);
      score[p.doc] += w * tf * (k1 + 1.0) / (tf + norm);
    }
  }
  std::vector<RetrievalHit> hits;
  hits.reserve(touched.size());
  for (std::size_t d : touched) {
    if (score[d] > 0.0) hits.push_back({docs_[d], score[d]});
  }
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    hit_before);
  hits.resize(keep);
  return hits;
}

std::vector<RetrievalHit> Bm25Index::retrieve(std::string_view query, std::size_t k) const {
  if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
  auto terms = distinct_in_order(tokenize(query));
  if (terms.empty()) throw InvalidQuery("query is empty after normalization");
  if (docs_.empty()) return {};
  return retrieve_terms(terms, k);
}

std::vector<std::vector<RetrievalHit>> Bm25Index::retrieve_batch(
    std::span<const std::string> queries, std::size_t k) const {
  if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
  std::vector<std::vector<RetrievalHit>> out(queries.size());
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t q = 0; q < n; ++q) {
    auto terms = distinct_in_order(tokenize(queries[static_cast<std::size_t>(q)]));
    if (!terms.empty() && !docs_.empty()) out[static_cast<std::size_t>(q)] = retrieve_terms(terms, k);
  }
  return out;
}

std::vector<std::vector<RetrievalHit>> Bm25Index::retrieve_batch_serial(
    std::span<const std::string> queries, std::size_t k) const {
  if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
  std::vector<std::vector<RetrievalHit>> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    auto terms = distinct_in_order(tokenize(queries[q]));
    if (!terms.empty() && !docs_.empty()) out[q] = retrieve_terms(terms, k);
  }
  return out;
}

void Bm25Index::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = "ssp-bm25";
  j["version"] = 1;
  j["k1"] = params_.k1;
  j["b"] = params_.b;
  j["docs"] = nlohmann::ordered_json::array();
  for (const auto& d : docs_) {
    j["docs"].push_back({{"id", d.doc_id}, {"title", d.title}, {"text", d.text}});
  }
  std::map<std::string, const std::vector<Posting>*> sorted;
  for (const auto& [term, plist] : postings_) sorted.emplace(term, &plist);
  nlohmann::ordered_json post = nlohmann::ordered_json::object();
  for (const auto& [term, plist] : sorted) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : *plist) arr.push_back({p.doc, p.tf});
    post[term] = std::move(arr);
  }
  j["postings"] = std::move(post);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write index file " + path.string());
  out << j.dump() << "\n";
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open index file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("index file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "ssp-bm25") {
    throw std::runtime_error("index file " + path.string() + " has an unknown format");
  }
  std::vector<Document> docs;
  for (const auto& d : j.at("docs")) {
    docs.push_back({d.at("id").get<std::string>(), d.at("title").get<std::string>(),
                    d.at("text").get<std::string>()});
  }
  Bm25Index idx = build(std::move(docs), {j.at("k1").get<double>(), j.at("b").get<double>()});
  // The stored postings must agree with a rebuild; anything else is corruption.
  const auto& stored = j.at("postings");
  if (stored.size() != idx.postings_.size()) {
    throw std::runtime_error("index file " + path.string() + " postings do not match its documents");
  }
  for (const auto& [term, plist] : idx.postings_) {
    if (!stored.contains(term) || stored[term].size() != plist.size()) {
      throw std::runtime_error("index file " + path.string() + " postings do not match its documents");
    }
  }
  return idx;
}

}  // namespace ssp
