#include "starsec/model.hpp"

#include <cmath>
#include <limits>

namespace starsec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_finite(const CMat& m, const char* what) {
  if (!m.allFinite()) throw std::runtime_error(std::string("non-finite entries in ") + what);
}

CVec profile_for_user(const ChannelSet& channels, const StarRisProfile& theta, int k) {
  return channels.user_in_reflection[static_cast<std::size_t>(k)] ? theta.theta_r : theta.theta_t;
}

void accumulate_covariances(const TransmitCovariances& j, CMat& sigma) {
  if (j.mats.empty()) throw std::invalid_argument("empty covariance list");
  sigma = j.mats[0];
  for (std::size_t i = 1; i < j.mats.size(); ++i) sigma += j.mats[i];
}

// Reusable factorization/workspace storage. Every evaluation in the solver's
// line searches funnels through these helpers, so the temporaries are kept
// per call site (sizes are stable there) instead of reallocated per call.
struct LogdetScratch {
  Eigen::LLT<CMat> chol;
  CMat w, tmp;
};

double logdet_ratio_ws(const CMat& x, const CMat& y, LogdetScratch& s) {
  const Eigen::Index n = x.rows();
  if (n == 0) return 0.0;
  s.chol.compute(y);
  if (s.chol.info() != Eigen::Success) return kNaN;
  // w = L^{-1} x L^{-H}; the second solve reuses Hermitian symmetry of x.
  s.w = x;
  s.chol.matrixL().solveInPlace(s.w);
  s.tmp = s.w.adjoint();
  s.chol.matrixL().solveInPlace(s.tmp);
  s.w = 0.5 * (s.tmp + s.tmp.adjoint());
  s.w.diagonal().array() += 1.0;
  s.chol.compute(s.w);
  if (s.chol.info() != Eigen::Success) return kNaN;
  return 2.0 * s.chol.matrixLLT().diagonal().real().array().log().sum();
}

// ln det of a Hermitian PD matrix via Cholesky; NaN when the factorization
// fails (indefinite or non-finite input), which callers treat as "reject".
double logdet_pd(const CMat& m, Eigen::LLT<CMat>& chol) {
  chol.compute(m);
  if (chol.info() != Eigen::Success) return kNaN;
  return 2.0 * chol.matrixLLT().diagonal().real().array().log().sum();
}

struct SecrecyScratch {
  CMat zsig, gram;
  CMat vsig, gram_e;
  Eigen::LLT<CMat> chol_user, chol_eave;
};

// ln det(I + V_T sigma V_T^H): shared across users, so evaluated once.
double eave_full_logdet(const ChannelSet& channels, const CMat& sigma, SecrecyScratch& s) {
  if (channels.v_t.rows() == 0) return 0.0;
  s.vsig.noalias() = channels.v_t * sigma;
  s.gram_e.noalias() = s.vsig * channels.v_t.adjoint();
  s.gram_e.diagonal().array() += 1.0;
  return logdet_pd(s.gram_e, s.chol_eave);
}

// Secrecy rate of user k. Both rate terms telescope through the split
// sigma = sigma_ck + J_ck, so each is a difference of Gram log-dets; all
// four Gram matrices dominate the identity and the differences never lose
// more than the usual log-det rounding.
double secrecy_rate_core(const CMat& z_k, const CMat& v_t, const CMat& sigma,
                         const CMat& sigma_ck, double ld_eave_full, bool* ok,
                         SecrecyScratch& s) {
  s.zsig.noalias() = z_k * sigma;
  s.gram.noalias() = s.zsig * z_k.adjoint();
  s.gram.diagonal().array() += 1.0;
  const double ld_full = logdet_pd(s.gram, s.chol_user);
  s.zsig.noalias() = z_k * sigma_ck;
  s.gram.noalias() = s.zsig * z_k.adjoint();
  s.gram.diagonal().array() += 1.0;
  const double ld_partial = logdet_pd(s.gram, s.chol_user);

  double eave_term = 0.0;
  if (v_t.rows() > 0) {
    s.vsig.noalias() = v_t * sigma_ck;
    s.gram_e.noalias() = s.vsig * v_t.adjoint();
    s.gram_e.diagonal().array() += 1.0;
    eave_term = ld_eave_full - logdet_pd(s.gram_e, s.chol_eave);
  }

  const double r = (ld_full - ld_partial) - eave_term;
  if (ok != nullptr && !std::isfinite(r)) *ok = false;
  return r;
}

double sum_secrecy_with_sigma(const ChannelSet& channels, const EffectiveChannels& zs,
                              const TransmitCovariances& j, const CMat& sigma,
                              std::vector<double>* user_rates_out, bool* ok) {
  static thread_local CMat sigma_ck;
  static thread_local SecrecyScratch scratch;
  const int n_users = channels.n_users();
  if (user_rates_out != nullptr) user_rates_out->assign(static_cast<std::size_t>(n_users), 0.0);
  const double ld_d = eave_full_logdet(channels, sigma, scratch);
  double total = 0.0;
  for (int k = 0; k < n_users; ++k) {
    sigma_ck = sigma - j.comm(k);
    const double r = secrecy_rate_core(zs.z[static_cast<std::size_t>(k)], channels.v_t, sigma,
                                       sigma_ck, ld_d, ok, scratch);
    if (user_rates_out != nullptr) (*user_rates_out)[static_cast<std::size_t>(k)] = r;
    total += r;
  }
  return total;
}

}  // namespace

CMat effective_channel(const ChannelSet& channels, const StarRisProfile& theta, int k) {
  const CMat& direct = channels.h_bk[static_cast<std::size_t>(k)];
  if (channels.n_ris() == 0) return direct;
  const CVec th = profile_for_user(channels, theta, k);
  if (th.size() != channels.n_ris())
    throw std::invalid_argument("profile length does not match surface size");
  // h_sk diag(theta) h_bs without materializing the diagonal.
  return direct + channels.h_sk[static_cast<std::size_t>(k)] * (th.asDiagonal() * channels.h_bs);
}

void effective_channels_into(const ChannelSet& channels, const StarRisProfile& theta,
                             EffectiveChannels& zs) {
  const int n_users = channels.n_users();
  zs.z.resize(static_cast<std::size_t>(n_users));
  if (channels.n_ris() == 0) {
    for (int k = 0; k < n_users; ++k) zs.z[static_cast<std::size_t>(k)] = channels.h_bk[static_cast<std::size_t>(k)];
    return;
  }
  if (theta.theta_r.size() != channels.n_ris() || theta.theta_t.size() != channels.n_ris())
    throw std::invalid_argument("profile length does not match surface size");
  // The scaled cascade diag(theta) h_bs depends only on the surface side, not
  // the user; build each side once and reuse it across the per-user products.
  static thread_local CMat scaled_r, scaled_t;
  bool need_r = false, need_t = false;
  for (int k = 0; k < n_users; ++k)
    (channels.user_in_reflection[static_cast<std::size_t>(k)] ? need_r : need_t) = true;
  if (need_r) scaled_r.noalias() = theta.theta_r.asDiagonal() * channels.h_bs;
  if (need_t) scaled_t.noalias() = theta.theta_t.asDiagonal() * channels.h_bs;
  for (int k = 0; k < n_users; ++k) {
    const std::size_t ku = static_cast<std::size_t>(k);
    const CMat& scaled = channels.user_in_reflection[ku] ? scaled_r : scaled_t;
    zs.z[ku].noalias() = channels.h_sk[ku] * scaled;
    zs.z[ku] += channels.h_bk[ku];
  }
}

EffectiveChannels effective_channels(const ChannelSet& channels, const StarRisProfile& theta) {
  EffectiveChannels zs;
  effective_channels_into(channels, theta, zs);
  return zs;
}

double logdet_ratio(const CMat& x, const CMat& y) {
  LogdetScratch s;
  return logdet_ratio_ws(x, y, s);
}

CMat covariance_sum(const TransmitCovariances& j) {
  CMat sigma;
  accumulate_covariances(j, sigma);
  return sigma;
}

double sum_secrecy_cached(const ChannelSet& channels, const EffectiveChannels& zs,
                          const TransmitCovariances& j, std::vector<double>* user_rates_out,
                          bool* ok) {
  static thread_local CMat sigma;
  accumulate_covariances(j, sigma);
  return sum_secrecy_with_sigma(channels, zs, j, sigma, user_rates_out, ok);
}

double secrecy_rate(const ChannelSet& channels, const TransmitCovariances& j,
                    const StarRisProfile& theta, int k) {
  if (k < 0 || k >= channels.n_users()) throw std::invalid_argument("user index out of range");
  if (j.n_users != channels.n_users()) throw std::invalid_argument("covariance user count mismatch");
  for (const auto& m : j.mats) require_finite(m, "covariance");
  const CMat z_k = effective_channel(channels, theta, k);
  require_finite(z_k, "effective channel");
  require_finite(channels.v_t, "eavesdropper channel");
  const CMat sigma = covariance_sum(j);
  SecrecyScratch scratch;
  const double ld_d = eave_full_logdet(channels, sigma, scratch);
  const double r =
      secrecy_rate_core(z_k, channels.v_t, sigma, sigma - j.comm(k), ld_d, nullptr, scratch);
  if (!std::isfinite(r)) throw std::runtime_error("secrecy rate evaluation failed (indefinite input?)");
  return r;
}

double sum_secrecy_rate(const ChannelSet& channels, const TransmitCovariances& j,
                        const StarRisProfile& theta) {
  double total = 0.0;
  for (int k = 0; k < channels.n_users(); ++k) total += secrecy_rate(channels, j, theta, k);
  return total;
}

std::vector<double> target_illumination(const ChannelSet& channels, const CMat& sigma) {
  static thread_local CVec u, su;
  const int n_targets = channels.n_targets();
  std::vector<double> s(static_cast<std::size_t>(n_targets), 0.0);
  for (int l = 0; l < n_targets; ++l) {
    u = channels.v_t.row(l).adjoint();
    su.noalias() = sigma * u;
    s[static_cast<std::size_t>(l)] = std::real(u.dot(su));
  }
  return s;
}

namespace {

struct SensingParts {
  double numerator = 0.0;    // mean_rcs * |phi^H v_r,l|^2 * illum_l
  double denominator = 1.0;  // mutual target interference + self-interference + noise
};

SensingParts sensing_parts(const ChannelSet& channels, const CMat& sigma,
                           const std::vector<double>& illum, const CVec& phi, int l,
                           const SensingSpec& spec) {
  static thread_local CVec gphi, sgphi;
  const int n_targets = channels.n_targets();
  SensingParts p;
  double mutual = 0.0;
  for (int jdx = 0; jdx < n_targets; ++jdx) {
    const cxd c = phi.dot(channels.v_r.col(jdx));
    const double term = spec.mean_rcs * std::norm(c) * illum[static_cast<std::size_t>(jdx)];
    if (jdx == l)
      p.numerator = term;
    else
      mutual += term;
  }
  gphi.noalias() = channels.g_si.adjoint() * phi;
  sgphi.noalias() = sigma * gphi;
  const double self_term = std::real(gphi.dot(sgphi));
  p.denominator = mutual + self_term + phi.squaredNorm();
  return p;
}

}  // namespace

double sensing_sinr(const ChannelSet& channels, const TransmitCovariances& j, const CVec& phi,
                    int l, const SensingSpec& spec) {
  if (l < 0 || l >= channels.n_targets()) throw std::invalid_argument("target index out of range");
  if (phi.size() != channels.n_rx()) throw std::invalid_argument("beamformer length mismatch");
  const CMat sigma = covariance_sum(j);
  const auto illum = target_illumination(channels, sigma);
  const auto p = sensing_parts(channels, sigma, illum, phi, l, spec);
  return p.numerator / p.denominator;
}

double sensing_rate(const ChannelSet& channels, const TransmitCovariances& j, const CVec& phi,
                    int l, const SensingSpec& spec) {
  return std::log1p(sensing_sinr(channels, j, phi, l, spec));
}

double constraint_residual(double delta_l, double tau_l, double sensing_rate_l) {
  return delta_l + tau_l - sensing_rate_l;
}

double constraint_residual(const ChannelSet& channels, const TransmitCovariances& j,
                           const CVec& phi, int l, const SensingSpec& spec, double tau_l) {
  return constraint_residual(spec.delta[static_cast<std::size_t>(l)], tau_l,
                             sensing_rate(channels, j, phi, l, spec));
}

std::vector<double> sensing_rates_cached(const ChannelSet& channels, const CMat& sigma,
                                         const ReceiveBeamformers& phis, const SensingSpec& spec) {
  const int n_targets = channels.n_targets();
  const auto illum = target_illumination(channels, sigma);
  std::vector<double> rates(static_cast<std::size_t>(n_targets), 0.0);
  for (int l = 0; l < n_targets; ++l) {
    const auto p = sensing_parts(channels, sigma, illum, phis.phis[static_cast<std::size_t>(l)], l, spec);
    rates[static_cast<std::size_t>(l)] = std::log1p(p.numerator / p.denominator);
  }
  return rates;
}

double penalty_term(const std::vector<double>& sensing_rates, const std::vector<double>& tau,
                    const std::vector<double>& nu, double rho, const SensingSpec& spec,
                    std::vector<double>* residuals_out) {
  if (!(rho > 0.0)) throw std::domain_error("penalty parameter must be positive");
  const std::size_t n = sensing_rates.size();
  if (residuals_out != nullptr) residuals_out->assign(n, 0.0);
  double penalty = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    const double g = constraint_residual(spec.delta[l], tau[l], sensing_rates[l]);
    if (residuals_out != nullptr) (*residuals_out)[l] = g;
    penalty += nu[l] * g + 0.5 * g * g / rho;
  }
  return penalty;
}

ObjectiveBreakdown evaluate_objective(const ChannelSet& channels, const EffectiveChannels& zs,
                                      const TransmitCovariances& j, const std::vector<double>& tau,
                                      const std::vector<double>& nu, double rho,
                                      const ReceiveBeamformers& phis, const SensingSpec& spec) {
  static thread_local CMat sigma;
  ObjectiveBreakdown out;
  bool ok = true;
  accumulate_covariances(j, sigma);
  out.true_objective = sum_secrecy_with_sigma(channels, zs, j, sigma, &out.user_rates, &ok);
  out.sensing_rates = sensing_rates_cached(channels, sigma, phis, spec);
  const double penalty = penalty_term(out.sensing_rates, tau, nu, rho, spec, &out.residuals);
  out.augmented = out.true_objective - penalty;
  out.finite = ok && std::isfinite(out.augmented);
  return out;
}

double augmented_objective(const ChannelSet& channels, const TransmitCovariances& j,
                           const StarRisProfile& theta, const std::vector<double>& tau,
                           const std::vector<double>& nu, double rho,
                           const ReceiveBeamformers& phis, const SensingSpec& spec) {
  if (static_cast<int>(tau.size()) != channels.n_targets() ||
      static_cast<int>(nu.size()) != channels.n_targets())
    throw std::invalid_argument("tau/nu length must match the number of sensing streams");
  const auto zs = effective_channels(channels, theta);
  const auto out = evaluate_objective(channels, zs, j, tau, nu, rho, phis, spec);
  if (!out.finite) throw std::runtime_error("objective evaluation failed (indefinite input?)");
  return out.augmented;
}

}  // namespace starsec
