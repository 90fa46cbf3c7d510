#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "starsec/gradients.hpp"
#include "starsec/model.hpp"
#include "starsec/projections.hpp"
#include "starsec/rng.hpp"
#include "starsec/scenario.hpp"
#include "starsec/types.hpp"

namespace starsec {

struct ArmijoOptions {
  double initial_step = 1.0;
  double shrink = 0.5;
  double slope = 1e-4;
  int max_backtracks = 30;
  // Carry each search site's last accepted step into the next iteration
  // (regrown by warm_growth, capped at the cold-start scale). The accepted
  // points still satisfy the same sufficient-increase test; this only trims
  // the backtracking prefix that a fixed start re-pays every iteration.
  bool warm_start = true;
  double warm_growth = 4.0;
};

struct SolverOptions {
  double inner_tol = 1e-5;
  int inner_lag = 5;
  int inner_cap = 2000;
  double outer_tol = 1e-5;
  int outer_cap = 30;
  double rho_init = 10.0;
  double zeta = 0.1;
  double rho_floor = 1e-12;
  ArmijoOptions armijo;
  std::uint64_t rng_seed = 0;  // 0 falls back to the scenario seed
};

struct PddState {
  std::vector<double> nu;
  std::vector<double> tau;
  double rho = 10.0;
  double zeta = 0.1;
};

// One record per inner iteration; objectives are evaluated after the full
// iteration (J, theta, tau, Phi, t all updated), matching how convergence is
// measured. The *_before/after fields expose the intra-iteration sub-steps.
struct TraceRecord {
  int iteration = 0;  // global counter, never reset across outer cycles
  int outer = 0;
  bool stage_start = false;  // first iteration of an inner run
  double rho = 0.0;
  double augmented = 0.0;
  double true_objective = 0.0;
  std::vector<double> sensing_rates;
  std::vector<double> residuals;
  std::vector<double> tau;
  char branch_j = '-';      // 'M' momentum candidate accepted, 'U' plain ascent
  char branch_theta = '-';  // 'X' extrapolated candidate, 'P' plain, '-' skipped
  double step_mu1 = 0.0;
  double step_mu2 = 0.0;
  double step_eta1 = 0.0;
  double step_eta2 = 0.0;
  double aug_before = 0.0;
  double aug_after_j = 0.0;
  double aug_after_theta = 0.0;
  double aug_after_tau = 0.0;
  double total_trace = 0.0;
  double max_theta_pair_error = 0.0;
  double max_phi_norm_error = 0.0;
  double min_gamma_gain = 0.0;  // worst per-target SINR change at the Phi refresh
  std::int64_t wall_ns = 0;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;
};

// Exact coordinate maximizer of the penalized objective in one slack variable.
double update_tau(double r_sl, double delta_sl, double nu_l, double rho);

// Backtracking search: largest step s in {s0, s0*shrink, ...} whose projected
// point satisfies objective_along(s) >= base_value + slope * increase(s),
// where increase(s) is the inner product of the gradient with the projected
// displacement (supplied by the caller through objective_along's bookkeeping).
// Returns 0 when no step qualifies. directional_derivative is the increase at
// the initial step and must be nonnegative.
double armijo_step(const std::function<double(double)>& objective_along, double base_value,
                   double directional_derivative, const ArmijoOptions& opts);

struct InnerResult {
  TransmitCovariances j;
  StarRisProfile theta;
  ReceiveBeamformers phis;
  std::vector<double> tau;
  bool converged = false;
  int iterations = 0;
};

// Accelerated projected-gradient pass over (J, theta, tau, Phi) at fixed
// (nu, rho). Appends one record per iteration to trace; pdd.tau is updated in
// place so the caller can warm-start the next pass.
InnerResult run_inner(const ChannelSet& channels, const ScenarioConfig& config,
                      const TransmitCovariances& j0, const StarRisProfile& theta0,
                      const ReceiveBeamformers& phis0, PddState& pdd, const SolverOptions& opts,
                      int outer_index, ConvergenceTrace& trace);

struct SolveResult {
  TransmitCovariances j;
  StarRisProfile theta;
  ReceiveBeamformers phis;
  PddState pdd;
  ConvergenceTrace trace;
  bool converged = false;
  int outer_iterations = 0;
  int total_inner_iterations = 0;
  double assr_nats = 0.0;
  std::vector<double> user_rates;
  std::vector<double> sensing_rates;
  std::vector<double> residuals;
};

// Penalty dual decomposition outer loop around run_inner.
SolveResult run_pdd(const ChannelSet& channels, const ScenarioConfig& config,
                    const SolverOptions& opts);

// Applies the variant's channel zeroing to a shared channel draw, then runs
// the outer loop; the config-only overload generates channels first.
SolveResult solve_variant(const ChannelSet& channels, const ScenarioConfig& config,
                          const SolverOptions& opts);
SolveResult solve_variant(const ScenarioConfig& config, const SolverOptions& opts);

}  // namespace starsec
