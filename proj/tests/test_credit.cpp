// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ssp/credit.hpp"
#include "ssp/gradcheck.hpp"
#include "support.hpp"

using namespace ssp;
namespace t = ssp::testing;

namespace {

std::vector<std::string> vocab(std::size_t v) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v; ++i) out.push_back("s" + std::to_string(i));
  return out;
}

ToyPolicy random_policy(std::size_t v, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Table l(v, v);
  for (double& x : l.data()) x = n(rng);
  return ToyPolicy(vocab(v), l);
}

std::vector<SequenceGroup> random_batch(std::size_t v, std::size_t groups, std::size_t n,
                                        std::size_t max_len, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> sym(0, static_cast<int>(v) - 1);
  std::uniform_int_distribution<std::size_t> len(2, max_len);
  std::bernoulli_distribution keep(0.65), win(0.5);
  std::vector<SequenceGroup> batch;
  for (std::size_t g = 0; g < groups; ++g) {
    SequenceGroup grp;
    for (std::size_t j = 0; j < n; ++j) {
      SymbolSequence s;
      const std::size_t l = len(rng);
      for (std::size_t i = 0; i < l; ++i) {
        s.symbols.push_back(sym(rng));
        s.mask.push_back(i > 0 && keep(rng));
      }
      s.mask[1] = true;
      grp.sequences.push_back(s);
      grp.rewards.push_back(win(rng) ? 1.0 : 0.0);
    }
    batch.push_back(grp);
  }
  return batch;
}

class AlwaysRight : public Judge {
 public:
  Judgment judge(const std::string& p, const std::string& truth, const std::string&) const override {
    return {p == truth, JudgeMethod::NormalizedEM, std::nullopt};
  }
};

}  // namespace

TEST_SUITE("credit") {

TEST_CASE("solver rewards and proposer reward") {
  AlwaysRight judge;
  auto g = solver_rewards({"t", "w", "t", "w", "w"}, "t", "q", judge);
  CHECK(g.rewards == std::vector<double>{1, 0, 1, 0, 0});
  CHECK(g.mean == doctest::Approx(0.4));
  auto none = solver_rewards({std::nullopt, std::nullopt}, "t", "q", judge);
  CHECK(none.rewards == std::vector<double>{0, 0});
  CHECK(none.mean == 0.0);
  CHECK(solver_rewards({"t"}, "t", "q", judge).rewards == std::vector<double>{1});
  CHECK(proposer_reward(make_group_rewards({1, 1, 0, 0, 0})) == doctest::Approx(0.6));
  CHECK(proposer_reward(make_group_rewards({1, 1, 1})) == 0.0);
  CHECK(proposer_reward(make_group_rewards({0, 0})) == 1.0);
}

TEST_CASE("advantages") {
  const std::vector<double> r{1, 0, 1, 0, 0};
  auto a = grpo_advantages(r);
  const std::vector<double> want{0.6, -0.4, 0.6, -0.4, -0.4};
  for (std::size_t i = 0; i < 5; ++i) CHECK(a[i] == doctest::Approx(want[i]).epsilon(1e-15));
  CHECK(grpo_advantages(std::vector<double>{1, 1, 1}) == std::vector<double>{0, 0, 0});
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> rr(1 + rng() % 8);
    for (double& x : rr) x = static_cast<double>(rng() % 2);
    auto got = grpo_advantages(rr);
    auto ref = t::oracle_advantages(rr);
    double sum = 0;
    for (std::size_t i = 0; i < rr.size(); ++i) {
      CHECK(std::abs(got[i] - ref[i]) <= 1e-12);
      sum += got[i];
    }
    CHECK(std::abs(sum) <= 1e-12);
  }
}

TEST_CASE("policy rows are distributions") {
  std::mt19937_64 rng(2);
  auto p = random_policy(9, rng, 3.0);
  for (int row = 0; row < 9; ++row) {
    double s = 0;
    for (double x : p.probs(row)) s += x;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  auto greedy = p.probs(0, 0.0);
  CHECK(std::count(greedy.begin(), greedy.end(), 1.0) == 1);
  p.mutable_logits()(1, 1) = std::nan("");
  CHECK_THROWS_AS(p.validate(), std::domain_error);
}

TEST_CASE("equal rewards and zero beta give an exactly zero gradient") {
  std::mt19937_64 rng(3);
  auto p = random_policy(6, rng);
  auto batch = random_batch(6, 3, 4, 7, rng);
  for (auto& g : batch) std::fill(g.rewards.begin(), g.rewards.end(), 1.0);
  OptimConfig cfg;
  cfg.beta = 0.0;
  auto r = grpo_loss_grad(p, p, batch, cfg);
  for (double x : r.grad.data()) CHECK(x == 0.0);
}

TEST_CASE("analytic gradient matches finite differences of the objective") {
  std::mt19937_64 rng(4);
  for (double beta : {0.0, 0.01, 0.1}) {
    for (auto norm : {LengthNorm::UnmaskedCount, LengthNorm::AllTokens}) {
      auto p = random_policy(12, rng);
      auto ref = random_policy(12, rng);
      auto batch = random_batch(12, 2, 3, 8, rng);
      OptimConfig cfg;
      cfg.beta = beta;
      cfg.length_norm = norm;
      auto r = grpo_loss_grad(p, ref, batch, cfg);
      CHECK(r.objective ==
            doctest::Approx(t::grpo_objective_oracle(p.logits(), ref.logits(), batch, beta, norm))
                .epsilon(1e-12));
      CHECK(r.loss() == -r.objective);
      auto fd = t::grpo_fd_gradient(p.logits(), ref.logits(), batch, beta, norm);
      CHECK(t::max_rel_error(r.grad, fd) < 1e-4);
    }
  }
}

TEST_CASE("parallel and serial gradients are bit-identical") {
  std::mt19937_64 rng(5);
  auto p = random_policy(10, rng);
  auto ref = random_policy(10, rng);
  auto batch = random_batch(10, 16, 5, 8, rng);
  OptimConfig cfg;
  cfg.beta = 0.05;
  auto a = grpo_loss_grad(p, ref, batch, cfg);
  auto b = grpo_loss_grad_serial(p, ref, batch, cfg);
  CHECK(a.grad == b.grad);
  CHECK(a.objective == b.objective);

  std::vector<SymbolSequence> trajs;
  std::vector<double> rets;
  for (auto& g : batch) {
    for (std::size_t j = 0; j < g.sequences.size(); ++j) {
      trajs.push_back(g.sequences[j]);
      rets.push_back(g.rewards[j] - 0.3);
    }
  }
  CHECK(reinforce_grad(p, trajs, rets) == reinforce_grad_serial(p, trajs, rets));
}

TEST_CASE("masked positions are ignored entirely") {
  std::mt19937_64 rng(6);
  auto p = random_policy(8, rng);
  auto ref = random_policy(8, rng);
  auto batch = random_batch(8, 3, 3, 8, rng);
  OptimConfig cfg;
  cfg.beta = 0.1;
  const auto base = grpo_loss_grad(p, ref, batch, cfg);
  for (int trial = 0; trial < 20; ++trial) {
    auto mutated = batch;
    for (auto& g : mutated) {
      for (auto& s : g.sequences) {
        for (std::size_t i = 1; i < s.symbols.size(); ++i) {
          if (!s.mask[i]) s.symbols[i] = static_cast<int>(rng() % 8);
        }
      }
    }
    const auto r = grpo_loss_grad(p, ref, mutated, cfg);
    CHECK(r.grad == base.grad);
    CHECK(r.objective == base.objective);
  }
  // Clearing an already-false mask bit changes nothing; clearing a true one does.
  auto cleared = batch;
  bool changed_true = false;
  for (auto& s : cleared[0].sequences) {
    for (std::size_t i = 2; i < s.mask.size() && !changed_true; ++i) {
      if (s.mask[i]) {
        s.mask[i] = false;
        changed_true = true;
      }
    }
  }
  REQUIRE(changed_true);
  CHECK_FALSE(grpo_loss_grad(p, ref, cleared, cfg).grad == base.grad);
}

TEST_CASE("reinforce matches the enumerated expected-return gradient") {
  std::mt19937_64 rng(7);
  auto p = random_policy(4, rng);
  auto e = t::enumerate_sequences(p.logits(), 0, 3);
  REQUIRE(e.sequences.size() == 64);
  std::vector<double> returns;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < e.sequences.size(); ++i) returns.push_back(u(rng));

  Table expectation(4, 4);
  for (std::size_t i = 0; i < e.sequences.size(); ++i) {
    Table g = reinforce_grad(p, std::span(&e.sequences[i], 1), std::span(&returns[i], 1));
    g *= e.probs[i];
    expectation += g;
  }
  auto want = t::expected_return_gradient(p.logits(), e, returns);
  CHECK(t::max_rel_error(expectation, want, 1e-300) < 1e-10);
}

TEST_CASE("reinforce is linear in the returns") {
  std::mt19937_64 rng(8);
  auto p = random_policy(5, rng);
  auto batch = random_batch(5, 1, 6, 6, rng);
  const auto& seqs = batch[0].sequences;
  std::vector<double> r{0.5, -0.25, 1.0, 0.0, 0.75, -1.0}, zero(6, 0.0), twice;
  for (double x : r) twice.push_back(2 * x);
  const Table g0 = reinforce_grad(p, seqs, zero);
  for (double x : g0.data()) CHECK(x == 0.0);
  Table g = reinforce_grad(p, seqs, r);
  Table g2 = reinforce_grad(p, seqs, twice);
  g *= 2.0;
  CHECK(g == g2);
}

TEST_CASE("kl is zero exactly for row-shifted logits") {
  std::mt19937_64 rng(9);
  auto p = random_policy(6, rng);
  ToyPolicy shifted = p;
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 6; ++c) shifted.mutable_logits()(r, c) += 0.5 * static_cast<double>(r);
  }
  for (int r = 0; r < 6; ++r) {
    CHECK(row_kl(p, p, r) == 0.0);
    CHECK(std::abs(row_kl(p, shifted, r)) < 1e-14);
  }
  auto q = random_policy(6, rng);
  CHECK(row_kl(p, q, 2) > 0.0);
  CHECK(row_kl(p, q, 2) == doctest::Approx(t::oracle_kl(p.logits(), q.logits(), 2)).epsilon(1e-12));

  // At pi == ref the KL term contributes no gradient.
  auto batch = random_batch(6, 2, 3, 6, rng);
  for (auto& g : batch) std::fill(g.rewards.begin(), g.rewards.end(), 0.0);
  OptimConfig cfg;
  cfg.beta = 0.1;
  const auto at_ref = grpo_loss_grad(p, p, batch, cfg);
  for (double x : at_ref.grad.data()) CHECK(x == 0.0);
}

TEST_CASE("vocabulary errors") {
  std::mt19937_64 rng(10);
  auto p = random_policy(4, rng);
  SequenceGroup g;
  g.sequences.push_back({{0, 9}, {false, true}});
  g.rewards = {1.0};
  std::vector<SequenceGroup> batch{g};
  CHECK_THROWS(grpo_loss_grad(p, p, batch, OptimConfig{}));
  std::vector<double> ret{1.0};
  CHECK_THROWS(reinforce_grad(p, std::span(&g.sequences[0], 1), ret));
  auto small = random_policy(3, rng);
  SequenceGroup ok;
  ok.sequences.push_back({{0, 1}, {false, true}});
  ok.rewards = {1.0};
  std::vector<SequenceGroup> okb{ok};
  CHECK_THROWS(grpo_loss_grad(p, small, okb, OptimConfig{}));
}

TEST_CASE("apply_update") {
  std::mt19937_64 rng(11);
  auto p = random_policy(4, rng);
  Table zero(4, 4);
  CHECK(apply_update(p, zero, 0.1) == p);
  Table one_hot(4, 4);
  one_hot(2, 3) = 1.0;
  auto q = apply_update(p, one_hot, 0.5);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(q.logits()(r, c) == p.logits()(r, c) + (r == 2 && c == 3 ? 0.5 : 0.0));
    }
  }
  one_hot(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(apply_update(p, one_hot, 0.1), std::domain_error);
}

TEST_CASE("small ascent steps raise expected return on a bandit task") {
  // Start symbol 0, one action among 4; action 2 pays 1, action 3 pays 0.5.
  std::mt19937_64 rng(12);
  auto p = random_policy(4, rng);
  const std::vector<double> payoff{0.0, 0.1, 1.0, 0.5};
  auto expected = [&](const ToyPolicy& pol) {
    auto pr = pol.probs(0);
    double e = 0;
    for (int a = 0; a < 4; ++a) e += pr[a] * payoff[a];
    return e;
  };
  double prev = expected(p);
  for (int step = 0; step < 100; ++step) {
    std::vector<SymbolSequence> seqs;
    std::vector<double> weights;
    auto pr = p.probs(0);
    for (int a = 0; a < 4; ++a) {
      seqs.push_back({{0, a}, {false, true}});
      weights.push_back(pr[a] * payoff[a] * 4.0);  // exact expectation over actions
    }
    p = apply_update(p, reinforce_grad(p, seqs, weights), 0.05);
    const double now = expected(p);
    CHECK(now > prev);
    prev = now;
  }
}

TEST_CASE("policy files round-trip exactly") {
  std::mt19937_64 rng(13);
  auto p = random_policy(5, rng, 2.0);
  const auto path = std::filesystem::temp_directory_path() / "ssp_policy_rt.txt";
  save_policy(p, path);
  CHECK(load_policy(path, p.vocab()) == p);
  CHECK_THROWS(load_policy(path, vocab(6)));
  std::filesystem::remove(path);
}

TEST_CASE("library gradcheck passes on its default configuration") {
  GradCheckOptions o;
  o.configs = 10;
  auto rep = run_gradcheck(o);
  CHECK(rep.configs == 10);
  CHECK(rep.passed(1e-4));
}

}  // TEST_SUITE
