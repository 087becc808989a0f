// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library code it is checking.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssp/credit.hpp"
#include "ssp/retriever.hpp"

namespace ssp::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(SSP_FIXTURE_DIR) / name;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- BM25 --------------------------------------------------------------

inline std::vector<std::string> oracle_tokens(const std::string& s) {
  std::vector<std::string> out(1);
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c >= 0x80;
    if (word) {
      out.back() += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    } else if (!out.back().empty()) {
      out.emplace_back();
    }
  }
  if (out.back().empty()) out.pop_back();
  return out;
}

struct OracleHit {
  std::string doc_id;
  double score;
};

// Scores every document with the textbook formula and sorts. Documents are
// tokenized once; each query recounts df and tf by linear scans.
class Bm25Oracle {
 public:
  explicit Bm25Oracle(const std::vector<Document>& docs, double k1 = 1.2, double b = 0.75)
      : docs_(docs), k1_(k1), b_(b) {
    double total = 0;
    for (const auto& d : docs) {
      toks_.push_back(oracle_tokens(d.title + " " + d.text));
      total += static_cast<double>(toks_.back().size());
    }
    avgdl_ = total / static_cast<double>(docs.size());
  }

  std::vector<OracleHit> query(const std::string& query, std::size_t k) const {
    const double n = static_cast<double>(docs_.size());
    std::vector<std::string> terms;
    for (auto& t : oracle_tokens(query)) {
      if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(t);
    }
    std::vector<double> idf;
    for (const auto& term : terms) {
      double df = 0;
      for (const auto& tk : toks_) df += std::count(tk.begin(), tk.end(), term) > 0 ? 1 : 0;
      idf.push_back(std::log(1.0 + (n - df + 0.5) / (df + 0.5)));
    }
    std::vector<OracleHit> hits;
    for (std::size_t d = 0; d < docs_.size(); ++d) {
      double s = 0;
      for (std::size_t i = 0; i < terms.size(); ++i) {
        const double tf = static_cast<double>(std::count(toks_[d].begin(), toks_[d].end(), terms[i]));
        if (tf == 0) continue;
        const double dl = static_cast<double>(toks_[d].size());
        s += idf[i] * tf * (k1_ + 1) / (tf + k1_ * (1 - b_ + b_ * dl / avgdl_));
      }
      if (s > 0) hits.push_back({docs_[d].doc_id, s});
    }
    std::sort(hits.begin(), hits.end(), [](const OracleHit& x, const OracleHit& y) {
      return x.score != y.score ? x.score > y.score : x.doc_id < y.doc_id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
  }

 private:
  std::vector<Document> docs_;
  std::vector<std::vector<std::string>> toks_;
  double k1_, b_, avgdl_ = 0;
};

inline std::vector<OracleHit> bm25_oracle(const std::vector<Document>& docs,
                                          const std::string& query, std::size_t k) {
  return Bm25Oracle(docs).query(query, k);
}

// ---- policy maths --------------------------------------------------------

inline std::vector<double> oracle_softmax(const Table& logits, int row) {
  const std::size_t v = logits.cols();
  double mx = -1e300;
  for (std::size_t c = 0; c < v; ++c) mx = std::max(mx, logits(static_cast<std::size_t>(row), c));
  std::vector<double> p(v);
  double z = 0;
  for (std::size_t c = 0; c < v; ++c) {
    p[c] = std::exp(logits(static_cast<std::size_t>(row), c) - mx);
    z += p[c];
  }
  for (double& x : p) x /= z;
  return p;
}

inline double oracle_kl(const Table& p_logits, const Table& q_logits, int row) {
  const auto p = oracle_softmax(p_logits, row);
  const auto q = oracle_softmax(q_logits, row);
  double kl = 0;
  for (std::size_t c = 0; c < p.size(); ++c) kl += p[c] * (std::log(p[c]) - std::log(q[c]));
  return kl;
}

inline std::vector<double> oracle_advantages(const std::vector<double>& r) {
  double sum = 0;
  for (double x : r) sum += x;
  const double mean = sum / static_cast<double>(r.size());
  std::vector<double> a;
  for (double x : r) a.push_back(x - mean);
  return a;
}

// Context of position t: latest earlier unmasked position, else position 0.
inline int oracle_context(const SymbolSequence& s, std::size_t t) {
  int ctx = s.symbols[0];
  for (std::size_t u = 1; u < t; ++u) {
    if (s.mask[u]) ctx = s.symbols[u];
  }
  return ctx;
}

// The GRPO objective (to be maximised) evaluated directly from its definition.
inline double grpo_objective_oracle(const Table& theta, const Table& ref,
                                    const std::vector<SequenceGroup>& batch, double beta,
                                    LengthNorm norm) {
  double total = 0;
  for (const auto& g : batch) {
    const auto adv = oracle_advantages(g.rewards);
    double group = 0;
    for (std::size_t j = 0; j < g.sequences.size(); ++j) {
      const auto& s = g.sequences[j];
      double logp = 0, kl = 0;
      std::size_t unmasked = 0;
      for (std::size_t t = 1; t < s.symbols.size(); ++t) {
        if (!s.mask[t]) continue;
        const int ctx = oracle_context(s, t);
        logp += std::log(oracle_softmax(theta, ctx)[static_cast<std::size_t>(s.symbols[t])]);
        kl += oracle_kl(theta, ref, ctx);
        ++unmasked;
      }
      if (unmasked == 0) continue;
      const double denom = norm == LengthNorm::UnmaskedCount
                               ? static_cast<double>(unmasked)
                               : static_cast<double>(s.symbols.size() - 1);
      group += adv[j] / denom * logp - beta * kl / static_cast<double>(unmasked);
    }
    total += group / static_cast<double>(g.sequences.size());
  }
  return total / static_cast<double>(batch.size());
}

// Central finite differences of grpo_objective_oracle, all parameters.
inline Table grpo_fd_gradient(const Table& theta, const Table& ref,
                              const std::vector<SequenceGroup>& batch, double beta,
                              LengthNorm norm, double h = 1e-5) {
  Table g(theta.rows(), theta.cols());
  Table probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = grpo_objective_oracle(probe, ref, batch, beta, norm);
    probe.data()[i] = orig - h;
    const double down = grpo_objective_oracle(probe, ref, batch, beta, norm);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double max_rel_error(const Table& a, const Table& b, double floor = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
  }
  return worst;
}

// ---- REINFORCE by enumeration ------------------------------------------

struct Enumerated {
  std::vector<SymbolSequence> sequences;
  std::vector<double> probs;
};

// Every length-`len` continuation of `start`, with its probability.
inline Enumerated enumerate_sequences(const Table& theta, int start, std::size_t len) {
  const int v = static_cast<int>(theta.cols());
  Enumerated e;
  std::vector<int> cur(len, 0);
  while (true) {
    SymbolSequence s;
    s.symbols.push_back(start);
    s.mask.push_back(false);
    double p = 1;
    int prev = start;
    for (int x : cur) {
      p *= oracle_softmax(theta, prev)[static_cast<std::size_t>(x)];
      s.symbols.push_back(x);
      s.mask.push_back(true);
      prev = x;
    }
    e.sequences.push_back(s);
    e.probs.push_back(p);
    std::size_t i = 0;
    while (i < len && ++cur[i] == v) cur[i++] = 0;
    if (i == len) break;
  }
  return e;
}

// d E[R] / d theta using the product rule on p(tau) = prod_t p_t.
inline Table expected_return_gradient(const Table& theta, const Enumerated& e,
                                      const std::vector<double>& returns) {
  Table g(theta.rows(), theta.cols());
  for (std::size_t n = 0; n < e.sequences.size(); ++n) {
    const auto& s = e.sequences[n];
    const std::size_t len = s.symbols.size() - 1;
    std::vector<double> pt(len);
    for (std::size_t t = 0; t < len; ++t) {
      pt[t] = oracle_softmax(theta, s.symbols[t])[static_cast<std::size_t>(s.symbols[t + 1])];
    }
    for (std::size_t t = 0; t < len; ++t) {
      double others = 1;
      for (std::size_t u = 0; u < len; ++u) {
        if (u != t) others *= pt[u];
      }
      const int row = s.symbols[t];
      const auto p = oracle_softmax(theta, row);
      const auto x = static_cast<std::size_t>(s.symbols[t + 1]);
      for (std::size_t k = 0; k < theta.cols(); ++k) {
        const double dpt = p[x] * ((x == k ? 1.0 : 0.0) - p[k]);
        g(static_cast<std::size_t>(row), k) += returns[n] * others * dpt;
      }
    }
  }
  return g;
}

}  // namespace ssp::testing
