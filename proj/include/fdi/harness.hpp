#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fdi/analysis.hpp"
#include "fdi/dynamics.hpp"
#include "fdi/objective.hpp"
#include "fdi/zofo.hpp"

namespace fdi {

/// Everything one experiment needs: scenario, objective, attack
/// hyperparameters, noise, trial count, seeding and output destination.
struct ExperimentConfig {
  std::string scenario_name;
  std::optional<Scenario> custom_scenario;  // overrides the registry when set
  Reference reference = Reference::constant(0.0);
  Matrix weight;  // Q
  AttackConfig attack;
  NoiseSpec noise;
  std::uint64_t trials = 1;
  std::uint64_t master_seed = 1;
  std::string out_dir;
  bool emit_plots = false;
  int workers = 0;  // 0 = all hardware threads
  std::string label;  // preset name or config file stem
};

/// Built-in presets fig1a, fig1b, fig2a, fig2b, fig3, fig4 (fig3/fig4 expand
/// to one sub-run per noise kind).
std::vector<std::string> preset_names();
std::vector<ExperimentConfig> make_preset(const std::string& name);

/// Parse a JSON experiment config (see README / --help for the key set).
ExperimentConfig load_config(const std::string& path);

struct ExperimentResult {
  int exit_code = 0;  // 0 ok, 3 when >10% of trials diverged
  std::string csv_path;
  std::string summary_path;
  GapReport gap;
  EnsembleStatistics stats;
  double slope_fit = 0.0;           // least-squares slope of ensemble-mean y
  double tail_output_mean = 0.0;    // mean over the final 20% of iterations
  double final_output_mean = 0.0;
  std::uint64_t diverged_trials = 0;
  double w_constraint_max = 0.0;      // max w'w/R observed
  double theta_norm_max = 0.0;        // max ||theta|| observed
  std::uint64_t rows_written = 0;
};

/// Runs `trials` seeded attack loops (trial i uses master_seed ^ i streams),
/// aggregates deterministically in trial order, writes trajectory.csv and
/// summary.json (and SVG plots when requested) atomically under out_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Text listing of registered scenarios with dimensions and stability flags.
std::string list_scenarios();

/// Theory-calculator report: mu, schedule, coupling matrix, rho, kappa*,
/// feasibility verdicts. Returns the rendered text; optionally also writes
/// a JSON version.
struct TheoryQuery {
  TheoryConstants constants;
  double epsilon = 0.0;
  double kappa = 0.0;
  std::uint64_t horizon = 0;
  bool noisy = false;
};
std::string theory_report(const TheoryQuery& query, const std::string& json_out_path = "");

/// Environment variable consulted for the default output directory.
inline constexpr const char* kOutDirEnvVar = "FDISIM_OUT";

}  // namespace fdi
