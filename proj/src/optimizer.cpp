#include "starsec/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace starsec {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct JCandidate {
  TransmitCovariances point;
  ObjectiveBreakdown eval;
  double value = kNegInf;
  double step = 0.0;
};

struct ThetaCandidate {
  StarRisProfile point;
  EffectiveChannels zs;
  ObjectiveBreakdown eval;
  double value = kNegInf;
  double step = 0.0;
};

TransmitCovariances extrapolate_covariances(const TransmitCovariances& j,
                                            const TransmitCovariances& m,
                                            const TransmitCovariances& j_prev, double r1,
                                            double r2) {
  TransmitCovariances q = j;
  for (std::size_t b = 0; b < q.mats.size(); ++b)
    q.mats[b] =
        hermitized(j.mats[b] + r1 * (m.mats[b] - j.mats[b]) + r2 * (j.mats[b] - j_prev.mats[b]));
  return q;
}

// Projected backtracking ascent for the covariance block; base_value must be
// finite. value stays -inf when no trial qualifies.
JCandidate search_covariances(const ChannelSet& channels, const EffectiveChannels& zs,
                              const TransmitCovariances& base, double base_value,
                              const CovariancesGradient& grad, double p_max,
                              const std::vector<double>& tau, const std::vector<double>& nu,
                              double rho, const ReceiveBeamformers& phis, const SensingSpec& spec,
                              const ArmijoOptions& opts, double* warm) {
  JCandidate out;
  static thread_local TransmitCovariances trial, proj;
  static thread_local CMat stepped;
  trial.n_users = base.n_users;
  trial.mats.resize(base.mats.size());
  double gnorm2 = 0.0;
  for (const auto& gm : grad.mats) gnorm2 += gm.squaredNorm();
  // Channel gains spread the gradient magnitude over many decades; scale the
  // step so the first trial displaces by about the power budget, keeping the
  // backtracking range centered on steps the projection does not saturate.
  double s = opts.initial_step * p_max / std::max(std::sqrt(gnorm2), 1e-150);
  if (opts.warm_start && warm && *warm > 0.0) s = std::min(*warm * opts.warm_growth, s);
  for (int i = 0; i <= opts.max_backtracks; ++i, s *= opts.shrink) {
    for (std::size_t b = 0; b < trial.mats.size(); ++b) {
      stepped = base.mats[b] + s * grad.mats[b];
      trial.mats[b] = 0.5 * (stepped + stepped.adjoint());
    }
    project_covariances_into(trial, p_max, proj);
    double incr = 0.0;
    for (std::size_t b = 0; b < proj.mats.size(); ++b)
      incr += (grad.mats[b].conjugate().cwiseProduct(proj.mats[b] - base.mats[b])).sum().real();
    if (incr < 0.0) continue;
    auto ev = evaluate_objective(channels, zs, proj, tau, nu, rho, phis, spec);
    if (!ev.finite) continue;
    if (ev.augmented >= base_value + opts.slope * incr) {
      out.point = proj;
      out.eval = std::move(ev);
      out.value = out.eval.augmented;
      out.step = s;
      if (opts.warm_start && warm) *warm = s;
      return out;
    }
  }
  if (opts.warm_start && warm) *warm = 0.0;  // cold-start after a failed search
  return out;
}

// Same search for the stacked surface profile at fixed covariances. The
// profile gradient is in the conjugate-coordinate convention, so the inner
// product with the projected displacement carries a factor 2.
ThetaCandidate search_profile(const ChannelSet& channels, const TransmitCovariances& j,
                              const CVec& base, double base_value, const CVec& grad,
                              SystemVariant variant, Rng& proj_rng, const std::vector<double>& tau,
                              const std::vector<double>& nu, double rho,
                              const ReceiveBeamformers& phis, const SensingSpec& spec,
                              const ArmijoOptions& opts, double* warm) {
  ThetaCandidate out;
  static thread_local CVec trial;
  static thread_local EffectiveChannels zs_trial;
  // Same step normalization as the covariance search: the feasible profile
  // set has stacked norm sqrt(n_ris), so start from a displacement of that order.
  const double span = std::sqrt(0.5 * static_cast<double>(base.size()));
  double s = opts.initial_step * span / std::max(grad.norm(), 1e-150);
  if (opts.warm_start && warm && *warm > 0.0) s = std::min(*warm * opts.warm_growth, s);
  for (int i = 0; i <= opts.max_backtracks; ++i, s *= opts.shrink) {
    trial = base + s * grad;
    StarRisProfile proj = project_profile(trial, variant, proj_rng);
    const double incr = 2.0 * re_inner(grad, proj.stacked() - base);
    if (incr < 0.0) continue;
    effective_channels_into(channels, proj, zs_trial);
    auto ev = evaluate_objective(channels, zs_trial, j, tau, nu, rho, phis, spec);
    if (!ev.finite) continue;
    if (ev.augmented >= base_value + opts.slope * incr) {
      out.point = std::move(proj);
      out.zs = zs_trial;
      out.eval = std::move(ev);
      out.value = out.eval.augmented;
      out.step = s;
      if (opts.warm_start && warm) *warm = s;
      return out;
    }
  }
  if (opts.warm_start && warm) *warm = 0.0;  // cold-start after a failed search
  return out;
}

double max_phi_norm_error(const ReceiveBeamformers& phis) {
  double worst = 0.0;
  for (const auto& phi : phis.phis) worst = std::max(worst, std::abs(phi.norm() - 1.0));
  return worst;
}

}  // namespace

double update_tau(double r_sl, double delta_sl, double nu_l, double rho) {
  if (!(rho > 0.0)) throw std::domain_error("penalty parameter must be positive");
  return std::max(0.0, r_sl - delta_sl - nu_l * rho);
}

double armijo_step(const std::function<double(double)>& objective_along, double base_value,
                   double directional_derivative, const ArmijoOptions& opts) {
  if (directional_derivative < 0.0)
    throw std::invalid_argument("ascent search requires a nonnegative directional derivative");
  double s = opts.initial_step;
  for (int i = 0; i <= opts.max_backtracks; ++i, s *= opts.shrink) {
    const double val = objective_along(s);
    if (std::isfinite(val) && val >= base_value + opts.slope * s * directional_derivative) return s;
  }
  return 0.0;
}

InnerResult run_inner(const ChannelSet& channels, const ScenarioConfig& config,
                      const TransmitCovariances& j0, const StarRisProfile& theta0,
                      const ReceiveBeamformers& phis0, PddState& pdd, const SolverOptions& opts,
                      int outer_index, ConvergenceTrace& trace) {
  using clock = std::chrono::steady_clock;
  const SensingSpec spec = config.sensing_spec();
  const SystemVariant variant = config.system_variant;
  const double p_max = config.p_max;
  const int n_targets = channels.n_targets();
  const bool use_theta = variant != SystemVariant::NoRis && channels.n_ris() > 0;
  const std::vector<double>& nu = pdd.nu;
  const double rho = pdd.rho;
  const std::uint64_t seed = opts.rng_seed != 0 ? opts.rng_seed : config.rng_seed;
  Rng proj_rng = Rng(seed).substream(rng_block::kDegeneratePairs);

  TransmitCovariances j_prev = j0;
  TransmitCovariances j_cur = j0;
  TransmitCovariances m_cur = j0;
  StarRisProfile theta_prev = theta0;
  StarRisProfile theta_cur = theta0;
  StarRisProfile xi_cur = theta0;
  ReceiveBeamformers phis = phis0;
  std::vector<double> tau = pdd.tau;
  double t_prev = 1.0;
  double t_cur = 1.0;

  EffectiveChannels zs_cur = effective_channels(channels, theta_cur);
  ObjectiveBreakdown eval_cur =
      evaluate_objective(channels, zs_cur, j_cur, tau, nu, rho, phis, spec);

  std::vector<double> history;
  InnerResult result;
  double warm_m = 0.0, warm_u = 0.0, warm_xi = 0.0, warm_wp = 0.0;

  for (int iter = 1; iter <= opts.inner_cap; ++iter) {
    const auto wall_start = clock::now();
    TraceRecord rec;
    rec.iteration = static_cast<int>(trace.records.size()) + 1;
    rec.outer = outer_index;
    rec.stage_start = iter == 1;
    rec.rho = rho;
    rec.aug_before = eval_cur.augmented;

    const double r1 = t_prev / t_cur;
    const double r2 = (t_prev - 1.0) / t_cur;

    // Covariance block: extrapolated candidate vs plain ascent, monitored.
    const TransmitCovariances q = extrapolate_covariances(j_cur, m_cur, j_prev, r1, r2);
    JCandidate m_cand;
    {
      const auto grad_q = grad_augmented_wrt_J_cached(channels, zs_cur, q, tau, nu, rho, phis, spec);
      const auto eval_q = evaluate_objective(channels, zs_cur, q, tau, nu, rho, phis, spec);
      if (grad_q.has_value() && eval_q.finite)
        m_cand = search_covariances(channels, zs_cur, q, eval_q.augmented, *grad_q, p_max, tau, nu,
                                    rho, phis, spec, opts.armijo, &warm_m);
      if (!(m_cand.value > kNegInf)) {
        // The extrapolation was unusable; fall back to its plain projection.
        m_cand.point = project_covariances(q, p_max);
        m_cand.step = 0.0;
        m_cand.eval = evaluate_objective(channels, zs_cur, m_cand.point, tau, nu, rho, phis, spec);
        m_cand.value = m_cand.eval.finite ? m_cand.eval.augmented : kNegInf;
      }
    }
    JCandidate u_cand;
    {
      const auto grad_j =
          grad_augmented_wrt_J_cached(channels, zs_cur, j_cur, tau, nu, rho, phis, spec);
      if (grad_j.has_value())
        u_cand = search_covariances(channels, zs_cur, j_cur, eval_cur.augmented, *grad_j, p_max,
                                    tau, nu, rho, phis, spec, opts.armijo, &warm_u);
      if (!(u_cand.value > kNegInf)) {
        u_cand.point = j_cur;  // step 0 keeps the feasible iterate exactly
        u_cand.step = 0.0;
        u_cand.eval = eval_cur;
        u_cand.value = eval_cur.augmented;
      }
    }
    const bool pick_m = m_cand.value >= u_cand.value;
    ObjectiveBreakdown bd_next = pick_m ? std::move(m_cand.eval) : std::move(u_cand.eval);
    rec.branch_j = pick_m ? 'M' : 'U';
    rec.step_mu1 = m_cand.step;
    rec.step_mu2 = u_cand.step;
    rec.aug_after_j = pick_m ? m_cand.value : u_cand.value;
    TransmitCovariances j_next;
    TransmitCovariances m_next;
    if (pick_m) {
      j_next = std::move(m_cand.point);
      m_next = j_next;  // the momentum candidate is carried either way
    } else {
      j_next = std::move(u_cand.point);
      m_next = std::move(m_cand.point);
    }

    // Surface block, mirrored; gradients are taken at the fresh covariances.
    StarRisProfile theta_next = theta_cur;
    StarRisProfile xi_next = xi_cur;
    EffectiveChannels zs_next = zs_cur;
    double aug_after_theta = rec.aug_after_j;
    if (use_theta) {
      const CVec theta_stacked = theta_cur.stacked();
      const CVec omega =
          theta_stacked + r1 * (xi_cur.stacked() - theta_stacked) +
          r2 * (theta_stacked - theta_prev.stacked());
      ThetaCandidate xi_cand;
      {
        const StarRisProfile omega_prof = StarRisProfile::from_stacked(omega);
        const EffectiveChannels zs_omega = effective_channels(channels, omega_prof);
        const auto grad_omega = grad_theta_cached(channels, zs_omega, j_next);
        const auto eval_omega =
            evaluate_objective(channels, zs_omega, j_next, tau, nu, rho, phis, spec);
        if (grad_omega.has_value() && eval_omega.finite)
          xi_cand = search_profile(channels, j_next, omega, eval_omega.augmented,
                                   grad_omega->stacked(), variant, proj_rng, tau, nu, rho, phis,
                                   spec, opts.armijo, &warm_xi);
        if (!(xi_cand.value > kNegInf)) {
          xi_cand.point = project_profile(omega, variant, proj_rng);
          xi_cand.step = 0.0;
          xi_cand.zs = effective_channels(channels, xi_cand.point);
          xi_cand.eval = evaluate_objective(channels, xi_cand.zs, j_next, tau, nu, rho, phis, spec);
          xi_cand.value = xi_cand.eval.finite ? xi_cand.eval.augmented : kNegInf;
        }
      }
      ThetaCandidate wp_cand;
      {
        // zs_cur still matches theta_cur; only J changed since it was built.
        ObjectiveBreakdown wp_base =
            evaluate_objective(channels, zs_cur, j_next, tau, nu, rho, phis, spec);
        const double base_value = wp_base.augmented;
        const auto grad_theta = grad_theta_cached(channels, zs_cur, j_next);
        if (grad_theta.has_value())
          wp_cand = search_profile(channels, j_next, theta_stacked, base_value,
                                   grad_theta->stacked(), variant, proj_rng, tau, nu, rho, phis,
                                   spec, opts.armijo, &warm_wp);
        if (!(wp_cand.value > kNegInf)) {
          wp_cand.point = theta_cur;  // step 0 keeps the feasible profile exactly
          wp_cand.step = 0.0;
          wp_cand.zs = zs_cur;
          wp_cand.eval = std::move(wp_base);
          wp_cand.value = wp_cand.eval.augmented;
        }
      }
      const bool pick_xi = xi_cand.value >= wp_cand.value;
      bd_next = pick_xi ? std::move(xi_cand.eval) : std::move(wp_cand.eval);
      rec.branch_theta = pick_xi ? 'X' : 'P';
      rec.step_eta1 = xi_cand.step;
      rec.step_eta2 = wp_cand.step;
      aug_after_theta = pick_xi ? xi_cand.value : wp_cand.value;
      if (pick_xi) {
        theta_next = std::move(xi_cand.point);
        zs_next = std::move(xi_cand.zs);
        xi_next = theta_next;  // the extrapolated candidate is carried either way
      } else {
        theta_next = std::move(wp_cand.point);
        zs_next = std::move(wp_cand.zs);
        xi_next = std::move(xi_cand.point);
      }
    }
    rec.aug_after_theta = aug_after_theta;

    // Exact slack maximizer at the fresh covariances and the old beamformers.
    // The accepted candidate's breakdown already carries the sensing rates at
    // (j_next, phis); the tau and beamformer refreshes leave the user terms
    // untouched, so the stage values below only reassemble the penalty.
    const CMat sigma_next = covariance_sum(j_next);
    const std::vector<double> rates_old_phi = std::move(bd_next.sensing_rates);
    for (int l = 0; l < n_targets; ++l) {
      const std::size_t lu = static_cast<std::size_t>(l);
      tau[lu] = update_tau(rates_old_phi[lu], spec.delta[lu], nu[lu], rho);
    }
    rec.aug_after_tau =
        bd_next.true_objective - penalty_term(rates_old_phi, tau, nu, rho, spec, nullptr);

    // Beamformer refresh maximizes each sensing SINR at the fresh covariances.
    const ReceiveBeamformers phis_new = optimal_receive_beamformers(channels, sigma_next, spec);
    double min_gain = 0.0;
    const std::vector<double> rates_new_phi =
        sensing_rates_cached(channels, sigma_next, phis_new, spec);
    for (int l = 0; l < n_targets; ++l) {
      const std::size_t lu = static_cast<std::size_t>(l);
      const double gain = rates_new_phi[lu] - rates_old_phi[lu];
      min_gain = l == 0 ? gain : std::min(min_gain, gain);
    }
    rec.min_gamma_gain = min_gain;
    phis = phis_new;

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_cur * t_cur));

    j_prev = std::move(j_cur);
    j_cur = std::move(j_next);
    m_cur = std::move(m_next);
    theta_prev = std::move(theta_cur);
    theta_cur = std::move(theta_next);
    xi_cur = std::move(xi_next);
    zs_cur = std::move(zs_next);
    t_prev = t_cur;
    t_cur = t_next;

    eval_cur = std::move(bd_next);
    eval_cur.sensing_rates = rates_new_phi;
    eval_cur.augmented = eval_cur.true_objective -
                         penalty_term(rates_new_phi, tau, nu, rho, spec, &eval_cur.residuals);
    eval_cur.finite = eval_cur.finite && std::isfinite(eval_cur.augmented);
    rec.augmented = eval_cur.augmented;
    rec.true_objective = eval_cur.true_objective;
    rec.sensing_rates = eval_cur.sensing_rates;
    rec.residuals = eval_cur.residuals;
    rec.tau = tau;
    rec.total_trace = j_cur.total_trace();
    rec.max_theta_pair_error = theta_cur.max_pair_error();
    rec.max_phi_norm_error = max_phi_norm_error(phis);
    rec.wall_ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - wall_start).count();
    trace.records.push_back(std::move(rec));

    history.push_back(eval_cur.augmented);
    result.iterations = iter;
    if (static_cast<int>(history.size()) > opts.inner_lag) {
      const double ref = history[history.size() - 1 - static_cast<std::size_t>(opts.inner_lag)];
      const double rel = std::abs(eval_cur.augmented - ref) / std::max(std::abs(ref), 1e-12);
      if (rel <= opts.inner_tol) {
        result.converged = true;
        break;
      }
    }
  }

  pdd.tau = tau;
  result.j = std::move(j_cur);
  result.theta = std::move(theta_cur);
  result.phis = std::move(phis);
  result.tau = pdd.tau;
  return result;
}

SolveResult run_pdd(const ChannelSet& channels, const ScenarioConfig& config,
                    const SolverOptions& opts) {
  const SensingSpec spec = config.sensing_spec();
  const int n_targets = channels.n_targets();
  const std::uint64_t seed = opts.rng_seed != 0 ? opts.rng_seed : config.rng_seed;

  PddState pdd;
  pdd.nu.assign(static_cast<std::size_t>(n_targets), 0.0);
  pdd.tau.assign(static_cast<std::size_t>(n_targets), 0.0);
  pdd.rho = opts.rho_init;
  pdd.zeta = opts.zeta;

  TransmitCovariances j =
      TransmitCovariances::zeros(channels.n_tx(), channels.n_users(), n_targets);
  Rng init_rng = Rng(seed).substream(rng_block::kBeamformerInit);
  StarRisProfile theta = StarRisProfile::power_split_init(channels.n_ris());
  if (config.system_variant == SystemVariant::ConventionalRis)
    theta = crirs_project_profile(theta.stacked(), config.system_variant, init_rng);
  ReceiveBeamformers phis;
  for (int l = 0; l < n_targets; ++l) phis.phis.push_back(init_rng.unit_vector(channels.n_rx()));

  SolveResult res;
  bool converged = false;
  int outers = 0;
  while (outers < opts.outer_cap && !converged) {
    InnerResult inner =
        run_inner(channels, config, j, theta, phis, pdd, opts, outers, res.trace);
    ++outers;
    j = std::move(inner.j);
    theta = std::move(inner.theta);
    phis = std::move(inner.phis);

    const auto& recs = res.trace.records;
    const std::size_t n = recs.size();
    if (n >= 6) {
      const double aug = recs[n - 1].augmented;
      const double denom = std::max(std::abs(aug), 1e-12);
      const double lag_gap = std::abs(aug - recs[n - 6].true_objective) / denom;
      const double inst_gap = std::abs(aug - recs[n - 1].true_objective) / denom;
      converged = lag_gap <= opts.outer_tol && inst_gap <= opts.outer_tol;
    }
    if (!converged) {
      const std::vector<double> rates =
          sensing_rates_cached(channels, covariance_sum(j), phis, spec);
      for (int l = 0; l < n_targets; ++l) {
        const std::size_t lu = static_cast<std::size_t>(l);
        pdd.nu[lu] += constraint_residual(spec.delta[lu], pdd.tau[lu], rates[lu]) / pdd.rho;
      }
      pdd.rho = std::max(pdd.rho * pdd.zeta, opts.rho_floor);
    }
  }

  const EffectiveChannels zs = effective_channels(channels, theta);
  const ObjectiveBreakdown final_eval =
      evaluate_objective(channels, zs, j, pdd.tau, pdd.nu, pdd.rho, phis, spec);

  res.j = std::move(j);
  res.theta = std::move(theta);
  res.phis = std::move(phis);
  res.pdd = std::move(pdd);
  res.converged = converged;
  res.outer_iterations = outers;
  res.total_inner_iterations = static_cast<int>(res.trace.records.size());
  res.assr_nats = final_eval.true_objective;
  res.user_rates = final_eval.user_rates;
  res.sensing_rates = final_eval.sensing_rates;
  res.residuals = final_eval.residuals;
  return res;
}

SolveResult solve_variant(const ChannelSet& channels, const ScenarioConfig& config,
                          const SolverOptions& opts) {
  if (config.system_variant == SystemVariant::NoRis)
    return run_pdd(zero_ris_links(channels), config, opts);
  return run_pdd(channels, config, opts);
}

SolveResult solve_variant(const ScenarioConfig& config, const SolverOptions& opts) {
  config.validate();
  const ScenarioGeometry geometry = default_geometry(config, config.rng_seed);
  const ChannelSet channels = generate_channels(config, geometry, config.rng_seed);
  return solve_variant(channels, config, opts);
}

}  // namespace starsec
