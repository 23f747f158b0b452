#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "fdi/harness.hpp"

namespace {

fdi::TheoryConstants load_constants(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fdi::IoError("cannot open constants file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw fdi::ConfigError(std::string("constants parse error: ") + e.what());
  }
  fdi::TheoryConstants c;
  c.M = j.at("M").get<double>();
  c.M_x = j.at("M_x").get<double>();
  c.M_y = j.at("M_y").get<double>();
  c.M_g = j.at("M_g").get<double>();
  // c1..c3 are the noisy-setting names for the same Lyapunov constants.
  c.alpha1 = j.contains("alpha1") ? j["alpha1"].get<double>() : j.at("c1").get<double>();
  c.alpha2 = j.contains("alpha2") ? j["alpha2"].get<double>() : j.at("c2").get<double>();
  c.alpha3 = j.contains("alpha3") ? j["alpha3"].get<double>() : j.at("c3").get<double>();
  c.sigma = j.value("sigma", 0.0);
  return c;
}

void print_result_line(const fdi::ExperimentConfig& cfg, const fdi::ExperimentResult& res) {
  std::printf("%s: trials=%llu T=%llu gap(avg)=%.6g gap(tail)=%.6g y(final)=%.6g "
              "slope=%.4g diverged=%llu -> %s\n",
              cfg.label.c_str(), static_cast<unsigned long long>(cfg.trials),
              static_cast<unsigned long long>(cfg.attack.horizon),
              res.gap.time_averaged_gap, res.gap.tail_time_averaged_gap,
              res.final_output_mean, res.slope_fit,
              static_cast<unsigned long long>(res.diverged_trials), res.csv_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fdisim: model-free false-data-injection attack simulator.\n"
      "Residual-feedback zeroth-order feedback optimization against registered\n"
      "discrete-time plants, with optimality-gap analysis and theory calculators."};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment from a config file or preset");
  std::string config_path, preset, out_dir;
  std::uint64_t trials = 0, seed = 0;
  bool plots = false;
  int workers = 0;
  run->add_option("--config", config_path,
                  "JSON config. Keys: scenario (registry name, or object with "
                  "A,B,C,K,Gamma,x0 as row-major nested arrays), reference "
                  "({kind:static,value} or {kind:ramp,slope}), Q (nested array), "
                  "delta, eta, R, T, probe (trig|uniform-sphere), noise "
                  "({kind:none|gaussian(mean,variance)|uniform(lo,hi)}), trials, "
                  "seed, out_dir, plots, workers");
  run->add_option("--preset", preset,
                  "Built-in preset: fig1a fig1b fig2a fig2b fig3 fig4");
  run->add_option("--trials", trials, "Override trial count");
  run->add_option("--seed", seed, "Override master seed");
  run->add_option("--out", out_dir,
                  "Output directory (default: $FDISIM_OUT, else ./out)");
  run->add_option("--workers", workers, "Worker threads (default: all cores)");
  run->add_flag("--plots", plots, "Also emit SVG plots rendered from the CSV");

  // scenarios
  auto* scen = app.add_subcommand("scenarios", "List registered scenarios");

  // theory
  auto* theory = app.add_subcommand("theory", "Evaluate the theory calculators");
  std::string constants_path, theory_json;
  double epsilon = 0.0, kappa = 0.0;
  std::uint64_t horizon = 0;
  bool noisy = false;
  theory->add_option("--constants", constants_path,
                     "JSON with M, M_x, M_y, M_g, alpha1..alpha3 (or c1..c3), sigma")
      ->required();
  theory->add_option("--epsilon", epsilon, "Precision target")->required();
  theory->add_option("--kappa", kappa, "Step-size scaling")->required();
  theory->add_option("--horizon", horizon, "Iteration count T")->required();
  theory->add_flag("--noisy", noisy, "Use the noisy-system schedule and constants");
  theory->add_option("--json", theory_json, "Also write the report as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (scen->parsed()) {
      std::cout << fdi::list_scenarios();
      return 0;
    }
    if (theory->parsed()) {
      fdi::TheoryQuery q;
      q.constants = load_constants(constants_path);
      q.epsilon = epsilon;
      q.kappa = kappa;
      q.horizon = horizon;
      q.noisy = noisy;
      std::cout << fdi::theory_report(q, theory_json);
      return 0;
    }
    // run
    std::vector<fdi::ExperimentConfig> configs;
    if (!preset.empty()) {
      configs = fdi::make_preset(preset);
    } else if (!config_path.empty()) {
      configs.push_back(fdi::load_config(config_path));
    } else {
      std::cerr << "run: need --config or --preset\n";
      return 2;
    }
    int exit_code = 0;
    for (fdi::ExperimentConfig& cfg : configs) {
      if (trials > 0) cfg.trials = trials;
      if (seed > 0) cfg.master_seed = seed;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (workers > 0) cfg.workers = workers;
      if (plots) cfg.emit_plots = true;
      const fdi::ExperimentResult res = fdi::run_experiment(cfg);
      print_result_line(cfg, res);
      exit_code = std::max(exit_code, res.exit_code);
    }
    return exit_code;
  } catch (const fdi::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const fdi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
