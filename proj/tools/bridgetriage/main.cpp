#include <iostream>

#include <CLI11.hpp>

#include "bridgetriage/attribution.hpp"
#include "bridgetriage/calibration.hpp"
#include "bridgetriage/dataset_io.hpp"
#include "bridgetriage/domain.hpp"
#include "commands.hpp"

using namespace bt::cli;

int main(int argc, char** argv) {
  CLI::App app{"Surrogate triage of bridge code compliance"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bridgetriage 0.1.0");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Sample parameters and label them with the oracle");
  generate->add_option("--n", gen.n, "Number of rows")->required();
  generate->add_option("--strategy", gen.strategy, "lhs or adaptive")->capture_default_str();
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--out", gen.out, "Dataset CSV (stdout when omitted)");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the per-head surrogates");
  train->add_option("--data", tr.data, "Dataset CSV")->required();
  train->add_option("--head", tr.head, "ms, mc, v or all")->capture_default_str();
  train->add_option("--config", tr.config, "TrainConfig JSON; flags override its values");
  train->add_option("--out", tr.out, "Model directory")->capture_default_str();
  train->add_option("--seed", tr.seed, "Split and initialization seed; heads use seed, seed+1, seed+2");
  train->add_option("--epochs", tr.epochs);
  train->add_option("--passes", tr.passes, "Monte Carlo passes for held-out metrics")->capture_default_str();

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Fit kappa per head on the validation split");
  calibrate->add_option("--models", cal.models)->capture_default_str();
  calibrate->add_option("--data", cal.data, "The dataset the models were trained on")->required();
  calibrate->add_option("--seed", cal.seed, "Monte Carlo noise seed")->capture_default_str();
  calibrate->add_option("--out", cal.out, "Output model directory (defaults to --models)");
  calibrate->add_option("--passes", cal.passes)->capture_default_str();
  calibrate->add_flag("--skip-ranking", cal.skip_ranking, "Do not recompute the stored SHAP ranking");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Metrics and calibration on the test split");
  evaluate->add_option("--models", ev.models)->capture_default_str();
  evaluate->add_option("--data", ev.data)->required();
  evaluate->add_option("--report,--out", ev.report, "Report JSON path");
  evaluate->add_option("--seed", ev.seed)->capture_default_str();
  evaluate->add_option("--passes", ev.passes)->capture_default_str();

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Predict and triage one structure");
  predict->add_option("--models", pr.models)->capture_default_str();
  predict->add_option("--features", pr.features, "JSON object {name: value}")->required();
  predict->add_flag("--reduced", pr.reduced, "Marginalize missing features");
  predict->add_option("--seed", pr.seed)->capture_default_str();
  predict->add_option("--out", pr.out, "Also write the JSON here");
  predict->add_option("--passes", pr.passes)->capture_default_str();
  predict->add_option("--marginal-samples", pr.marginal_samples)->capture_default_str();
  predict->add_option("--reduced-passes", pr.reduced_passes)->capture_default_str();

  ExplainArgs ex;
  auto* explain = app.add_subcommand("explain", "Kernel SHAP attribution for one head");
  explain->add_option("--models", ex.models)->capture_default_str();
  explain->add_option("--features", ex.features, "JSON object with all 10 features")->required();
  explain->add_option("--head", ex.head, "ms, mc or v")->required();
  explain->add_option("--known", ex.known, "Features already known, for next-feature guidance")->delimiter(',');
  explain->add_option("--seed", ex.seed)->capture_default_str();
  explain->add_option("--out", ex.out, "Also write the JSON here");
  explain->add_option("--coalitions", ex.coalitions)->capture_default_str();
  explain->add_option("--mc-passes", ex.mc_passes)->capture_default_str();

  TriageArgs tg;
  auto* triage = app.add_subcommand("triage", "Batch triage of a portfolio CSV");
  triage->add_option("--models", tg.models)->capture_default_str();
  triage->add_option("--portfolio", tg.portfolio, "Feature CSV (labels optional)")->required();
  triage->add_option("--seed", tg.seed)->capture_default_str();
  triage->add_option("--out", tg.out, "Results CSV (stdout when omitted)");
  triage->add_option("--passes", tg.passes)->capture_default_str();

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", sv.config, "Service config JSON");
  serve->add_option("--models", sv.models, "Overrides model_dir and BT_MODEL_DIR");
  serve->add_option("--addr", sv.addr, "host:port; overrides the config and BT_ADDR");
  serve->add_option("--seed", sv.seed, "Seed for requests that carry none");
  serve->add_option("--out", sv.out, "Write the bound address as JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*generate) run_generate(gen);
    if (*train) run_train(tr);
    if (*calibrate) run_calibrate(cal);
    if (*evaluate) run_evaluate(ev);
    if (*predict) run_predict(pr);
    if (*explain) run_explain(ex);
    if (*triage) run_triage(tg);
    if (*serve) run_serve(sv);
  } catch (const bt::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& d : e.details()) std::cerr << "  " << d << '\n';
    return kInvalid;
  } catch (const bt::CsvError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const bt::UnfittableError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
