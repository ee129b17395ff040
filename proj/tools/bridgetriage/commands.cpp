#include "commands.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <pthread.h>

#include "bridgetriage/bundle.hpp"
#include "bridgetriage/dataset_io.hpp"
#include "bridgetriage/evaluation.hpp"
#include "bridgetriage/hash.hpp"
#include "bridgetriage/sampling.hpp"
#include "bridgetriage/service.hpp"

namespace bt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void emit(const json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  std::cout << text << std::flush;
  if (!out.empty()) write_file(out, text);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + " is not valid JSON: " + e.what());
  }
}

Dataset read_data(const std::string& path) {
  if (path.empty()) throw ValidationError("--data is required");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open data file " + path);
  return read_dataset_csv(is);
}

std::map<std::string, double> read_features(const std::string& path) {
  if (path.empty()) throw ValidationError("--features is required");
  const json j = read_json(path);
  if (!j.is_object()) throw ValidationError("features file must hold a JSON object {name: value}");
  std::map<std::string, double> out;
  std::vector<std::string> bad;
  for (const auto& [name, value] : j.items()) {
    if (value.is_number()) {
      out[name] = value.get<double>();
    } else {
      bad.push_back(name + ": not a number");
    }
  }
  if (!bad.empty()) throw ValidationError("malformed features file", bad);
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : ", ") + p;
  return s;
}

// Split seed and data fingerprint recorded by train.
struct Manifest {
  std::uint64_t split_seed = 0;
  std::string data_fingerprint;
};

Manifest read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) throw ValidationError(path.string() + " not found; run train first");
  const json j = read_json(path);
  try {
    return {j.at("split_seed").get<std::uint64_t>(), j.at("data_fingerprint").get<std::string>()};
  } catch (const json::exception& e) {
    throw ValidationError("manifest.json: " + std::string(e.what()));
  }
}

DatasetSplit load_split(const std::string& data_path, const Manifest& manifest) {
  const Dataset data = read_data(data_path);
  if (file_fingerprint(data_path) != manifest.data_fingerprint) {
    throw ValidationError("data file " + data_path + " differs from the file the models were trained on");
  }
  return split_dataset(data, manifest.split_seed);
}

Head require_head(const std::string& name) {
  const auto h = parse_head(name);
  if (!h) throw ValidationError("unknown head '" + name + "' (expected ms, mc or v)");
  return *h;
}

}  // namespace

void run_generate(const GenerateArgs& a) {
  if (a.n == 0) throw ValidationError("--n must be at least 1");
  const auto strategy = parse_strategy(a.strategy);
  if (!strategy) throw ValidationError("unknown strategy '" + a.strategy + "' (expected lhs or adaptive)");
  const Dataset data = generate_design(a.n, *strategy, a.seed);
  std::ostringstream os;
  write_dataset_csv(os, data);
  if (a.out.empty()) {
    std::cout << os.str() << std::flush;
    return;
  }
  write_file(a.out, os.str());
  std::cerr << "wrote " << data.size() << " rows to " << a.out << '\n';
  emit({{"rows", data.size()},
        {"strategy", strategy_name(*strategy)},
        {"seed", a.seed},
        {"out", a.out},
        {"fingerprint", fnv1a64_hex(os.str())}},
       {});
}

void run_train(const TrainArgs& a) {
  const Dataset data = read_data(a.data);
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : train_config_from_json(read_json(a.config));
  if (a.seed) cfg.seed = *a.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  cfg.validate();
  if (a.passes < 2) throw ValidationError("--passes must be at least 2");

  std::vector<Head> heads;
  if (a.head == "all") {
    heads.assign(kHeads.begin(), kHeads.end());
  } else {
    heads.push_back(require_head(a.head));
  }

  const DatasetSplit split = split_dataset(data, cfg.seed);
  if (split.train.empty()) throw ValidationError("training split is empty; provide more rows");
  const Dataset& heldout = split.validation.empty() ? split.train : split.validation;

  const fs::path out(a.out);
  fs::create_directories(out);
  const auto manifest_path = out / "manifest.json";
  json manifest = json::object();
  if (a.head != "all" && fs::exists(manifest_path)) manifest = read_json(manifest_path);
  manifest["split_seed"] = cfg.seed;
  manifest["data_fingerprint"] = file_fingerprint(a.data);
  manifest["data_rows"] = data.size();
  manifest["split"] = {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}};
  manifest["train_config"] = to_json(cfg);
  if (!manifest.contains("heads")) manifest["heads"] = json::object();

  json result{{"heads", json::object()}};
  for (Head h : heads) {
    TrainConfig hc = cfg;
    hc.seed = cfg.seed + head_index(h);
    std::cerr << "training " << head_name(h) << " on " << split.train.size() << " rows, " << hc.epochs
              << " epochs\n";
    const TrainResult res = train(split.train, h, hc);
    save_model(res.model, model_file(out, h));

    std::vector<BridgeParams> xs;
    for (const auto& r : heldout) xs.push_back(r.x);
    const auto moments = predict_moments(res.model, feature_matrix(xs), a.passes, cfg.seed);
    const auto y = labels(heldout, h);
    const std::vector<double> mu(moments.mean.data(), moments.mean.data() + moments.mean.size());
    const auto overall = regression_metrics(y, mu);
    const auto band = band_metrics(y, mu);
    const double final_loss = res.epoch_losses.empty() ? res.initial_loss : res.epoch_losses.back();
    std::cerr << "  loss " << res.initial_loss << " -> " << final_loss << "; held-out RMSE " << overall.rmse
              << ", MAPE " << overall.mape_pct << "%; band RMSE " << band.rmse << ", MAPE " << band.mape_pct
              << "% (n=" << band.n << ")\n";
    const json head_json{{"seed", hc.seed},
                         {"initial_loss", res.initial_loss},
                         {"final_loss", final_loss},
                         {"heldout", {{"overall", to_json(overall)}, {"band_0.5_1.5", to_json(band)}}}};
    result["heads"][std::string(head_name(h))] = head_json;
    manifest["heads"][std::string(head_name(h))] = head_json;
  }
  write_background(out / "background.csv", make_background(kBackgroundSize, cfg.seed));
  fs::remove(out / "ranking.json");  // stale once any head changes
  write_file(manifest_path, manifest.dump(2) + "\n");
  result["out"] = out.string();
  result["split_seed"] = cfg.seed;
  emit(result, {});
}

void run_calibrate(const CalibrateArgs& a) {
  if (a.passes < 2) throw ValidationError("--passes must be at least 2");
  const fs::path in(a.models);
  ModelBundle bundle = load_bundle(in);
  const Manifest manifest = read_manifest(in);
  const DatasetSplit split = load_split(a.data, manifest);
  if (split.validation.empty()) throw ValidationError("validation split is empty; provide more rows");

  const fs::path out = a.out.empty() ? in : fs::path(a.out);
  fs::create_directories(out);
  if (out != in) {
    for (const char* name : {"background.csv", "manifest.json"}) {
      if (fs::exists(in / name)) fs::copy_file(in / name, out / name, fs::copy_options::overwrite_existing);
    }
  }

  const auto moments = predict_rows(bundle.surrogates, split.validation, a.passes, a.seed);
  const auto levels = default_levels();
  json result{{"heads", json::object()}};
  for (Head h : kHeads) {
    const auto preds = point_predictions(moments[head_index(h)]);
    const auto y = labels(split.validation, h);
    const auto before = calibration_metrics(preds, y, levels, 1.0);
    const double kappa = fit_kappa(preds, y, levels);
    const auto after = calibration_metrics(preds, y, levels, kappa);
    bundle.surrogates[h].kappa = kappa;
    save_model(bundle.surrogates[h], model_file(out, h));
    const std::string name(head_name(h));
    std::cerr << render_table(before, name + " before (kappa = 1)") << '\n'
              << render_table(after, name + " after") << '\n';
    result["heads"][name] = {{"kappa", kappa}, {"before", to_json(before)}, {"after", to_json(after)}};
  }

  if (!a.skip_ranking) {
    std::cerr << "ranking features with kernel SHAP\n";
    RankingOptions ro;
    ro.seed = a.seed;
    const FeatureRanking ranking = compute_ranking(bundle.surrogates, bundle.background, ro);
    const json rj = to_json(ranking);
    write_file(out / "ranking.json", rj.dump(2) + "\n");
    result["ranking"] = rj.at("ranking");
  }
  result["out"] = out.string();
  emit(result, {});
}

void run_evaluate(const EvaluateArgs& a) {
  if (a.passes < 2) throw ValidationError("--passes must be at least 2");
  const fs::path dir(a.models);
  const ModelBundle bundle = load_bundle(dir);
  const Manifest manifest = read_manifest(dir);
  const DatasetSplit split = load_split(a.data, manifest);
  if (split.test.empty()) throw ValidationError("test split is empty; provide more rows");

  json report = to_json(evaluate(bundle.surrogates, split.test, a.passes, a.seed));
  report["split"] = "test";
  report["data_fingerprint"] = manifest.data_fingerprint;
  json fp = json::object();
  for (Head h : kHeads) fp[std::string(head_name(h))] = bundle.fingerprints[head_index(h)];
  report["model_fingerprints"] = fp;
  for (Head h : kHeads) {
    const auto& e = report["heads"][std::string(head_name(h))];
    std::cerr << head_name(h) << ": RMSE " << e["overall"]["rmse"].get<double>() << ", band RMSE "
              << e["band_0.5_1.5"]["rmse"].get<double>() << ", band MAPE "
              << e["band_0.5_1.5"]["mape_pct"].get<double>() << "%, TCE "
              << e["calibration_before"]["tce"].get<double>() << " -> " << e["calibration_after"]["tce"].get<double>()
              << '\n';
  }
  emit(report, a.report);
}

void run_predict(const PredictArgs& a) {
  const auto features = read_features(a.features);
  if (features.empty()) throw ValidationError("features file lists no features");
  Query q = Query::from_features(features);
  const auto missing = q.missing_indices();
  if (!missing.empty() && !a.reduced) {
    std::vector<std::string> names;
    for (auto i : missing) names.push_back(FeatureSchema::canonical()[i].name);
    throw ValidationError("missing features: " + join(names) + " (pass --reduced to marginalize them)", names);
  }
  q.seed = a.seed;
  q.n_mc_passes = a.passes;
  q.n_marginal_samples = a.marginal_samples;
  q.reduced_mc_passes = a.reduced_passes;
  const ModelBundle bundle = load_bundle(a.models);
  emit(prediction_json(predict_reduced(bundle.surrogates, q), a.seed), a.out);
}

void run_explain(const ExplainArgs& a) {
  const Head head = require_head(a.head);
  const auto features = read_features(a.features);
  const Query q = Query::from_features(features);
  const auto& schema = FeatureSchema::canonical();
  if (const auto missing = q.missing_indices(); !missing.empty()) {
    std::vector<std::string> names;
    for (auto i : missing) names.push_back(schema[i].name);
    throw ValidationError("explain needs all 10 features; missing: " + join(names), names);
  }
  std::vector<bool> known(kFeatureCount, false);
  for (const auto& name : a.known) {
    const auto idx = schema.index_of(name);
    if (!idx) throw ValidationError("unknown feature in --known: " + name);
    known[*idx] = true;
  }
  std::array<double, kFeatureCount> values{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) values[i] = *q.known[i];

  const ModelBundle bundle = load_bundle(a.models);
  const std::size_t bg_n = std::min(kBackgroundSize, bundle.background.size());
  const Attribution attr =
      explain(bundle.surrogates[head], BridgeParams::from_array(values),
              std::span<const BridgeParams>(bundle.background.data(), bg_n),
              ExplainOptions{a.coalitions, a.mc_passes, a.seed});
  emit(explanation_json(attr, known), a.out);
}

void run_triage(const TriageArgs& a) {
  if (a.portfolio.empty()) throw ValidationError("--portfolio is required");
  std::ifstream is(a.portfolio, std::ios::binary);
  if (!is) throw ValidationError("cannot open portfolio " + a.portfolio);
  const auto rows = read_feature_csv(is);
  std::vector<BridgeParams> params;
  std::vector<std::string> errors;
  for (const auto& r : rows) {
    params.push_back(r.params);
    errors.push_back(r.parse_error);
  }
  const ModelBundle bundle = load_bundle(a.models);
  const BatchTriage batch = batch_triage(params, bundle.surrogates, a.passes, a.seed, errors);
  std::ostringstream os;
  write_batch_triage_csv(os, batch);
  const json summary = to_json(batch.summary);
  if (a.out.empty()) {
    std::cout << os.str() << std::flush;
    std::cerr << summary.dump() << '\n';
  } else {
    write_file(a.out, os.str());
    emit({{"summary", summary}, {"out", a.out}}, {});
  }
}

void run_serve(const ServeArgs& a) {
  ServiceConfig config = a.config.empty() ? ServiceConfig{} : ServiceConfig::load(a.config);
  config.apply_environment();
  if (!a.models.empty()) config.model_dir = a.models;
  if (!a.addr.empty()) config.set_addr(a.addr);
  if (a.seed) config.default_seed = *a.seed;

  Service service(load_bundle(config.model_dir), config);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const int port = service.bind();
  std::cerr << "listening on " << config.host << ":" << port << " (models: " << config.model_dir.string() << ")\n";
  if (!a.out.empty()) write_file(a.out, json{{"host", config.host}, {"port", port}}.dump() + "\n");

  std::thread server([&] { service.listen_after_bind(); });
  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "shutting down\n";
  service.stop();
  server.join();
}

}  // namespace bt::cli
