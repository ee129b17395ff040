#include <benchmark/benchmark.h>

#include <vector>

#include "bridgetriage/attribution.hpp"
#include "bridgetriage/bnn.hpp"
#include "bridgetriage/bundle.hpp"
#include "bridgetriage/domain.hpp"
#include "bridgetriage/inference.hpp"
#include "bridgetriage/sampling.hpp"

namespace {

bt::SurrogateSet untrained_surrogates() {
  const auto rows = bt::generate_dataset(bt::FeatureSchema::canonical(), bt::make_background(64, 1));
  const auto standardization = bt::Standardization::fit(rows);
  bt::SurrogateSet s;
  for (bt::Head h : bt::kHeads) {
    s[h] = bt::init_model(h, bt::head_index(h));
    s[h].standardization = standardization;
  }
  return s;
}

const bt::SurrogateSet& surrogates() {
  static const bt::SurrogateSet s = untrained_surrogates();
  return s;
}

void BM_Oracle(benchmark::State& state) {
  const auto rows = bt::make_background(256, 2);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bt::oracle_evaluate(rows[i++ % rows.size()]));
  }
}
BENCHMARK(BM_Oracle);

void BM_LhsSample(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(bt::lhs_sample(static_cast<std::size_t>(state.range(0)), 10, 3));
}
BENCHMARK(BM_LhsSample)->Arg(1000)->Arg(10000);

void BM_PredictMoments(benchmark::State& state) {
  const auto rows = bt::make_background(static_cast<std::size_t>(state.range(0)), 4);
  const Eigen::MatrixXd raw = bt::feature_matrix(rows);
  for (auto _ : state) benchmark::DoNotOptimize(bt::predict_moments(surrogates()[bt::Head::ms], raw, 100, 0));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}
BENCHMARK(BM_PredictMoments)->Arg(1)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_PredictFull(benchmark::State& state) {
  const auto p = bt::schema_midpoint(bt::FeatureSchema::canonical());
  for (auto _ : state) benchmark::DoNotOptimize(bt::predict_full(surrogates(), p, 1000, 0));
}
BENCHMARK(BM_PredictFull)->Unit(benchmark::kMillisecond);

void BM_PredictReduced(benchmark::State& state) {
  const auto v = bt::schema_midpoint(bt::FeatureSchema::canonical()).to_array();
  bt::Query q;
  for (std::size_t i = 0; i < 3; ++i) q.known[i] = v[i];
  for (auto _ : state) benchmark::DoNotOptimize(bt::predict_reduced(surrogates(), q));
}
BENCHMARK(BM_PredictReduced)->Unit(benchmark::kMillisecond);

void BM_KernelShap(benchmark::State& state) {
  const auto background = bt::make_background(25, 5);
  const auto x = bt::schema_midpoint(bt::FeatureSchema::canonical());
  bt::ExplainOptions o;
  o.mc_passes = 50;
  for (auto _ : state) benchmark::DoNotOptimize(bt::explain(surrogates()[bt::Head::v], x, background, o));
}
BENCHMARK(BM_KernelShap)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  const auto rows = bt::generate_dataset(bt::FeatureSchema::canonical(), bt::make_background(1024, 6));
  bt::TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(bt::train(rows, bt::Head::ms, cfg));
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
