#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "starsec/optimizer.hpp"
#include "starsec/scenario.hpp"

namespace starsec {

enum class SweepAxis { None, RisElements, PmaxDbm, SensingSinrDb, UserAntennas, Targets };

std::string sweep_axis_name(SweepAxis axis);
SweepAxis sweep_axis_from_name(const std::string& name);

// Returns a copy of base with the swept field overridden; the derived
// reflection split is recomputed only when the axis does not pin it.
ScenarioConfig apply_sweep(const ScenarioConfig& base, SweepAxis axis, double value);

struct ExperimentPlan {
  SweepAxis sweep_axis = SweepAxis::None;
  std::vector<double> sweep_values;
  int n_realizations = 5;
  std::vector<SystemVariant> variants{SystemVariant::Star, SystemVariant::ConventionalRis,
                                      SystemVariant::NoRis};
  ScenarioConfig base;
  SolverOptions solver;
  bool freeze_positions = false;  // reuse realization 0's user/target geometry everywhere
  std::string output_path;

  void validate() const;
};

SolverOptions solver_options_from_json(const nlohmann::json& doc);
ExperimentPlan plan_from_json(const nlohmann::json& doc);
ExperimentPlan load_plan(const std::string& path);

struct ResultRow {
  SystemVariant variant = SystemVariant::Star;
  SweepAxis sweep_axis = SweepAxis::None;
  double sweep_value = 0.0;
  std::uint64_t seed = 0;
  double assr_nats = 0.0;
  double assr_bits = 0.0;
  std::vector<double> sensing_rates;
  bool converged = false;
  int iterations = 0;
  double wall_ms = 0.0;
  bool failed = false;
  std::string error;

  double min_sensing_rate() const;
};

// Solves every (sweep value, realization, variant) cell. Realizations share a
// channel draw across variants so comparisons are paired; a solver failure is
// recorded in its row and never aborts the sweep.
std::vector<ResultRow> run_experiment(const ExperimentPlan& plan, int workers = 1);

void emit_results(const std::vector<ResultRow>& rows, const std::string& csv_path);
void emit_trace_csv(const ConvergenceTrace& trace, const std::string& csv_path);

// Per (variant, sweep value) mean/standard error, plus the paired STAR vs cRIS
// dominance fraction whenever both variants are present.
nlohmann::json summarize(const std::vector<ResultRow>& rows);
void emit_summary(const std::vector<ResultRow>& rows, const std::string& json_path);

struct TimingPoint {
  int n_ris = 0;
  double median_iter_ms = 0.0;
  int iterations = 0;
};

struct TimingReport {
  std::vector<TimingPoint> points;
  bool slope_defined = false;
  double slope = 0.0;  // log-log least-squares fit over the points
};

// Runs fixed-length inner passes at each surface size and reports the median
// per-iteration wall time. The fitted slope is published only when the series
// has at least two points and spans at least an 8x ratio.
TimingReport timing_probe(const ScenarioConfig& base, const std::vector<int>& ris_sizes,
                          int iterations_per_point);
nlohmann::json timing_to_json(const TimingReport& report);

}  // namespace starsec
