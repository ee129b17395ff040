#include "support.hpp"

#include "bridgetriage/bundle.hpp"

namespace bt::test {

Dataset oracle_rows(std::size_t n, std::uint64_t seed) {
  return generate_dataset(FeatureSchema::canonical(), make_background(n, seed));
}

SurrogateSet stub_surrogates(std::uint64_t seed) {
  SurrogateSet s;
  for (Head h : kHeads) s[h] = init_model(h, seed + head_index(h), Architecture{{10, 4, 1}});
  return s;
}

const SurrogateSet& small_surrogates() {
  static const SurrogateSet models = [] {
    const Dataset data = oracle_rows(600, 11);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 64;
    cfg.learning_rate = 5e-3;
    cfg.train_mc_passes = 4;
    SurrogateSet s;
    for (Head h : kHeads) {
      cfg.seed = 100 + head_index(h);
      s[h] = train(data, h, cfg, Architecture{{10, 16, 1}}).model;
    }
    return s;
  }();
  return models;
}

BnnModel linear_head(Head head, const std::array<double, kFeatureCount>& w, double b, double bias_std) {
  BnnModel m = init_model(head, 0, Architecture{{kFeatureCount, 1}});
  for (std::size_t i = 0; i < kFeatureCount; ++i) m.means[i] = w[i];
  m.means[kFeatureCount] = b;
  for (auto& r : m.raw_scales) r = -200.0;
  if (bias_std > 0.0) m.raw_scales[kFeatureCount] = inverse_softplus(bias_std);
  return m;
}

SurrogateSet constant_surrogates(double mu_ms, double mu_mc, double mu_v) {
  SurrogateSet s;
  const double mus[] = {mu_ms, mu_mc, mu_v};
  for (Head h : kHeads) s[h] = linear_head(h, {}, inverse_softplus(mus[head_index(h)]));
  return s;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bridgetriage_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace bt::test
