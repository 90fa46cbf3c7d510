#include "starsec/gradients.hpp"

#include <cmath>

namespace starsec {

namespace {

void accumulate_covariances(const TransmitCovariances& j, CMat& sigma) {
  sigma = j.mats[0];
  for (std::size_t i = 1; i < j.mats.size(); ++i) sigma += j.mats[i];
}

struct SecrecyPieces {
  std::vector<CMat> t_full;     // Z_k^H C_k^{-1} Z_k
  std::vector<CMat> t_partial;  // Z_k^H A_kk^{-1} Z_k
  std::vector<CMat> e_partial;  // V_T^H B_k^{-1} V_T
  CMat e_full;                  // V_T^H D^{-1} V_T
};

// Factorization workspace; user-side and eavesdropper-side problems have
// different dimensions, so each keeps its own Cholesky and solve buffers.
struct PiecesScratch {
  Eigen::LLT<CMat> chol_user, chol_eave;
  CMat sigma_ck, zsig, vsig, m_user, m_eave, w_user, w_eave;
};

bool secrecy_pieces(const ChannelSet& channels, const EffectiveChannels& zs, const CMat& sigma,
                    const TransmitCovariances& j, SecrecyPieces* out) {
  static thread_local PiecesScratch ps;
  const int n_users = channels.n_users();
  const int n_tx = channels.n_tx();
  const int n_targets = channels.n_targets();
  const CMat& v_t = channels.v_t;

  out->t_full.resize(static_cast<std::size_t>(n_users));
  out->t_partial.resize(static_cast<std::size_t>(n_users));
  out->e_partial.resize(static_cast<std::size_t>(n_users));

  if (n_targets > 0) {
    ps.vsig.noalias() = v_t * sigma;
    ps.m_eave.noalias() = ps.vsig * v_t.adjoint();
    ps.m_eave.diagonal().array() += 1.0;
    ps.chol_eave.compute(ps.m_eave);
    if (ps.chol_eave.info() != Eigen::Success) return false;
    ps.w_eave = ps.chol_eave.solve(v_t);
    out->e_full.noalias() = v_t.adjoint() * ps.w_eave;
  } else {
    out->e_full.setZero(n_tx, n_tx);
    for (int k = 0; k < n_users; ++k)
      out->e_partial[static_cast<std::size_t>(k)].setZero(n_tx, n_tx);
  }

  for (int k = 0; k < n_users; ++k) {
    const std::size_t ku = static_cast<std::size_t>(k);
    const CMat& z = zs.z[ku];
    ps.sigma_ck = sigma - j.comm(k);

    ps.zsig.noalias() = z * sigma;
    ps.m_user.noalias() = ps.zsig * z.adjoint();
    ps.m_user.diagonal().array() += 1.0;
    ps.chol_user.compute(ps.m_user);
    if (ps.chol_user.info() != Eigen::Success) return false;
    ps.w_user = ps.chol_user.solve(z);
    out->t_full[ku].noalias() = z.adjoint() * ps.w_user;

    ps.zsig.noalias() = z * ps.sigma_ck;
    ps.m_user.noalias() = ps.zsig * z.adjoint();
    ps.m_user.diagonal().array() += 1.0;
    ps.chol_user.compute(ps.m_user);
    if (ps.chol_user.info() != Eigen::Success) return false;
    ps.w_user = ps.chol_user.solve(z);
    out->t_partial[ku].noalias() = z.adjoint() * ps.w_user;

    if (n_targets > 0) {
      ps.vsig.noalias() = v_t * ps.sigma_ck;
      ps.m_eave.noalias() = ps.vsig * v_t.adjoint();
      ps.m_eave.diagonal().array() += 1.0;
      ps.chol_eave.compute(ps.m_eave);
      if (ps.chol_eave.info() != Eigen::Success) return false;
      ps.w_eave = ps.chol_eave.solve(v_t);
      out->e_partial[ku].noalias() = v_t.adjoint() * ps.w_eave;
    }
  }
  return true;
}

// Numerator matrices and scalar denominators of the sensing-rate gradient.
struct SensingGradPieces {
  std::vector<CMat> grads;  // one per sensing stream, shared across varpi
};

void sensing_grad_pieces(const ChannelSet& channels, const CMat& sigma,
                         const ReceiveBeamformers& phis, const SensingSpec& spec,
                         SensingGradPieces* out) {
  static thread_local CVec u, su, row_h;
  static thread_local CMat num_full, num_excl, outer;
  const int n_targets = channels.n_targets();
  const auto illum = target_illumination(channels, sigma);
  out->grads.resize(static_cast<std::size_t>(n_targets));

  for (int l = 0; l < n_targets; ++l) {
    const CVec& phi = phis.phis[static_cast<std::size_t>(l)];
    u.noalias() = channels.g_si.adjoint() * phi;
    su.noalias() = sigma * u;
    const double self_term = std::real(u.dot(su));
    const double noise = phi.squaredNorm();

    num_full.noalias() = u * u.adjoint();
    num_excl = num_full;
    double den_full = self_term + noise;
    double den_excl = den_full;
    for (int jdx = 0; jdx < n_targets; ++jdx) {
      const double q = std::norm(phi.dot(channels.v_r.col(jdx)));
      row_h = channels.v_t.row(jdx).adjoint();
      outer.noalias() = (spec.mean_rcs * q) * (row_h * channels.v_t.row(jdx));
      num_full += outer;
      den_full += spec.mean_rcs * q * illum[static_cast<std::size_t>(jdx)];
      if (jdx != l) {
        num_excl += outer;
        den_excl += spec.mean_rcs * q * illum[static_cast<std::size_t>(jdx)];
      }
    }
    out->grads[static_cast<std::size_t>(l)] = num_full / den_full - num_excl / den_excl;
  }
}

void make_hermitian(CMat& m) { m = (0.5 * (m + m.adjoint())).eval(); }

}  // namespace

CMat grad_secrecy_wrt_J(const ChannelSet& channels, const TransmitCovariances& j,
                        const StarRisProfile& theta, int k, int varpi) {
  if (k < 0 || k >= channels.n_users()) throw std::invalid_argument("user index out of range");
  if (varpi < 0 || varpi >= j.n_total()) throw std::invalid_argument("covariance index out of range");
  const auto zs = effective_channels(channels, theta);
  const CMat sigma = covariance_sum(j);
  SecrecyPieces p;
  if (!secrecy_pieces(channels, zs, sigma, j, &p))
    throw std::runtime_error("secrecy gradient factorization failed");
  const std::size_t ku = static_cast<std::size_t>(k);
  CMat g;
  if (varpi == k)
    g = p.t_full[ku] - p.e_full;
  else
    g = (p.t_full[ku] - p.t_partial[ku]) - (p.e_full - p.e_partial[ku]);
  make_hermitian(g);
  return g;
}

CMat grad_sensing_wrt_J(const ChannelSet& channels, const TransmitCovariances& j, const CVec& phi,
                        int l, const SensingSpec& spec) {
  if (l < 0 || l >= channels.n_targets()) throw std::invalid_argument("target index out of range");
  const CMat sigma = covariance_sum(j);
  ReceiveBeamformers phis;
  phis.phis.assign(static_cast<std::size_t>(channels.n_targets()), phi);
  SensingGradPieces p;
  sensing_grad_pieces(channels, sigma, phis, spec, &p);
  CMat g = p.grads[static_cast<std::size_t>(l)];
  make_hermitian(g);
  return g;
}

std::optional<CovariancesGradient> grad_augmented_wrt_J_cached(
    const ChannelSet& channels, const EffectiveChannels& zs, const TransmitCovariances& j,
    const std::vector<double>& tau, const std::vector<double>& nu, double rho,
    const ReceiveBeamformers& phis, const SensingSpec& spec) {
  static thread_local CMat sigma, cross_sum, sensing_part, g;
  static thread_local SecrecyPieces sp;
  static thread_local std::vector<CMat> cross;
  static thread_local SensingGradPieces gp;
  const int n_users = channels.n_users();
  const int n_targets = channels.n_targets();
  const int n_tx = channels.n_tx();
  accumulate_covariances(j, sigma);

  if (!secrecy_pieces(channels, zs, sigma, j, &sp)) return std::nullopt;

  // Per-user contribution when the covariance appears only through the
  // interference term, and the extra piece when it is the user's own.
  cross.resize(static_cast<std::size_t>(n_users));
  cross_sum.setZero(n_tx, n_tx);
  for (int k = 0; k < n_users; ++k) {
    const std::size_t ku = static_cast<std::size_t>(k);
    cross[ku] = (sp.t_full[ku] - sp.t_partial[ku]) - (sp.e_full - sp.e_partial[ku]);
    cross_sum += cross[ku];
  }

  sensing_part.setZero(n_tx, n_tx);
  if (n_targets > 0) {
    sensing_grad_pieces(channels, sigma, phis, spec, &gp);
    const auto rates = sensing_rates_cached(channels, sigma, phis, spec);
    for (int l = 0; l < n_targets; ++l) {
      const std::size_t lu = static_cast<std::size_t>(l);
      const double g_l = constraint_residual(spec.delta[lu], tau[lu], rates[lu]);
      const double w_l = nu[lu] + g_l / rho;
      sensing_part += w_l * gp.grads[lu];
    }
  }

  CovariancesGradient out;
  out.mats.resize(j.mats.size());
  for (int varpi = 0; varpi < j.n_total(); ++varpi) {
    g = cross_sum + sensing_part;
    if (varpi < n_users) {
      const std::size_t vu = static_cast<std::size_t>(varpi);
      g += (sp.t_full[vu] - sp.e_full) - cross[vu];
    }
    out.mats[static_cast<std::size_t>(varpi)] = 0.5 * (g + g.adjoint());
  }
  return out;
}

CovariancesGradient grad_augmented_wrt_J(const ChannelSet& channels, const TransmitCovariances& j,
                                         const StarRisProfile& theta, const std::vector<double>& tau,
                                         const std::vector<double>& nu, double rho,
                                         const ReceiveBeamformers& phis, const SensingSpec& spec) {
  if (!(rho > 0.0)) throw std::domain_error("penalty parameter must be positive");
  const auto zs = effective_channels(channels, theta);
  auto g = grad_augmented_wrt_J_cached(channels, zs, j, tau, nu, rho, phis, spec);
  if (!g.has_value()) throw std::runtime_error("augmented gradient factorization failed");
  return std::move(*g);
}

std::optional<ProfileGradient> grad_theta_cached(const ChannelSet& channels,
                                                 const EffectiveChannels& zs,
                                                 const TransmitCovariances& j) {
  static thread_local CMat sigma, sigma_ck, zsig, zsigck, m_c, m_a, p, w;
  static thread_local Eigen::LLT<CMat> chol_c, chol_a;
  static thread_local CVec diag;
  const int n_users = channels.n_users();
  const int n_ris = channels.n_ris();
  accumulate_covariances(j, sigma);

  ProfileGradient out;
  out.grad_r = CVec::Zero(n_ris);
  out.grad_t = CVec::Zero(n_ris);
  if (n_ris == 0) return out;

  for (int k = 0; k < n_users; ++k) {
    const std::size_t ku = static_cast<std::size_t>(k);
    const CMat& z = zs.z[ku];
    sigma_ck = sigma - j.comm(k);

    zsig.noalias() = z * sigma;
    zsigck.noalias() = z * sigma_ck;
    m_c.noalias() = zsig * z.adjoint();
    m_c.diagonal().array() += 1.0;
    m_a.noalias() = zsigck * z.adjoint();
    m_a.diagonal().array() += 1.0;
    chol_c.compute(m_c);
    chol_a.compute(m_a);
    if (chol_c.info() != Eigen::Success || chol_a.info() != Eigen::Success) return std::nullopt;

    chol_c.solveInPlace(zsig);
    chol_a.solveInPlace(zsigck);
    p = zsig - zsigck;
    // Row-wise contraction of h_sk^H (p h_bs^H): diagonal entries only,
    // linear in the surface size.
    w.noalias() = p * channels.h_bs.adjoint();
    diag = channels.h_sk[ku].conjugate().cwiseProduct(w).colwise().sum().transpose();
    if (channels.user_in_reflection[ku])
      out.grad_r += diag;
    else
      out.grad_t += diag;
  }
  return out;
}

ProfileGradient grad_augmented_wrt_theta(const ChannelSet& channels, const TransmitCovariances& j,
                                         const StarRisProfile& theta) {
  const auto zs = effective_channels(channels, theta);
  auto g = grad_theta_cached(channels, zs, j);
  if (!g.has_value()) throw std::runtime_error("profile gradient factorization failed");
  return std::move(*g);
}

}  // namespace starsec
