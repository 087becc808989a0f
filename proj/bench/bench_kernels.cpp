// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <random>

#include "ssp/credit.hpp"
#include "ssp/gradcheck.hpp"
#include "ssp/retriever.hpp"
#include "ssp/toyworld.hpp"

namespace {

struct RetrievalData {
  ssp::Bm25Index index;
  std::vector<std::string> queries;
};

const RetrievalData& retrieval_data() {
  static const RetrievalData data = [] {
    auto world = ssp::toy::FactWorld::generate(2000, 1);
    std::vector<std::string> qs;
    for (const auto& q : world.sample_questions(512, 2)) qs.push_back(q.question);
    return RetrievalData{ssp::Bm25Index::build(world.documents()), std::move(qs)};
  }();
  return data;
}

const ssp::GradProblem& grpo_problem() {
  static const ssp::GradProblem p = [] {
    ssp::GradCheckOptions o;
    o.vocab = 32;
    o.max_len = 64;
    o.batch_sizes = {64};
    o.group_sizes = {8};
    o.betas = {0.01};
    return ssp::random_grad_problem(o, 0);
  }();
  return p;
}

void BM_Bm25BatchSerial(benchmark::State& st) {
  const auto& d = retrieval_data();
  for (auto _ : st) benchmark::DoNotOptimize(d.index.retrieve_batch_serial(d.queries, 3));
}
void BM_Bm25BatchParallel(benchmark::State& st) {
  const auto& d = retrieval_data();
  for (auto _ : st) benchmark::DoNotOptimize(d.index.retrieve_batch(d.queries, 3));
}

void BM_GrpoSerial(benchmark::State& st) {
  const auto& p = grpo_problem();
  for (auto _ : st) {
    benchmark::DoNotOptimize(ssp::grpo_loss_grad_serial(p.policy, p.reference, p.batch, p.cfg));
  }
}
void BM_GrpoParallel(benchmark::State& st) {
  const auto& p = grpo_problem();
  for (auto _ : st) {
    benchmark::DoNotOptimize(ssp::grpo_loss_grad(p.policy, p.reference, p.batch, p.cfg));
  }
}

std::vector<ssp::SymbolSequence> flat_sequences() {
  std::vector<ssp::SymbolSequence> out;
  for (const auto& g : grpo_problem().batch) out.insert(out.end(), g.sequences.begin(), g.sequences.end());
  return out;
}

void BM_ReinforceSerial(benchmark::State& st) {
  const auto seqs = flat_sequences();
  const std::vector<double> ret(seqs.size(), 0.5);
  for (auto _ : st) {
    benchmark::DoNotOptimize(ssp::reinforce_grad_serial(grpo_problem().policy, seqs, ret));
  }
}
void BM_ReinforceParallel(benchmark::State& st) {
  const auto seqs = flat_sequences();
  const std::vector<double> ret(seqs.size(), 0.5);
  for (auto _ : st) benchmark::DoNotOptimize(ssp::reinforce_grad(grpo_problem().policy, seqs, ret));
}

}  // namespace

BENCHMARK(BM_Bm25BatchSerial);
BENCHMARK(BM_Bm25BatchParallel);
BENCHMARK(BM_GrpoSerial);
BENCHMARK(BM_GrpoParallel);
BENCHMARK(BM_ReinforceSerial);
BENCHMARK(BM_ReinforceParallel);

BENCHMARK_MAIN();
