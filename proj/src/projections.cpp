#include "starsec/projections.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace starsec {

namespace {

constexpr double kHermitianTol = 1e-6;

cxd random_unit_phase(Rng& rng) {
  const double a = 2.0 * M_PI * rng.uniform();
  return {std::cos(a), std::sin(a)};
}

}  // namespace

void project_covariances_into(const TransmitCovariances& raw, double p_max,
                              TransmitCovariances& out) {
  if (!(p_max > 0.0)) throw std::invalid_argument("power budget must be positive");
  const std::size_t n_mats = raw.mats.size();
  if (n_mats == 0) throw std::invalid_argument("no covariance matrices to project");

  // The line searches project once per trial point; the eigensolvers and
  // buffers are kept warm so a trial costs factorizations, not allocations.
  static thread_local std::vector<Eigen::SelfAdjointEigenSolver<CMat>> eigs;
  static thread_local std::vector<double> all_evals;
  static thread_local Eigen::VectorXd lam;
  static thread_local CMat herm, scaled;
  if (eigs.size() < n_mats) eigs.resize(n_mats);
  all_evals.clear();
  for (std::size_t i = 0; i < n_mats; ++i) {
    const CMat& m = raw.mats[i];
    if (m.rows() != m.cols()) throw std::invalid_argument("covariance matrices must be square");
    if (max_asymmetry(m) > kHermitianTol)
      throw std::invalid_argument("covariance projection input must be Hermitian");
    herm = 0.5 * (m + m.adjoint());
    eigs[i].compute(herm);
    if (eigs[i].info() != Eigen::Success)
      throw std::runtime_error("covariance eigendecomposition failed");
    const auto& ev = eigs[i].eigenvalues();
    all_evals.insert(all_evals.end(), ev.data(), ev.data() + ev.size());
  }

  double clipped_trace = 0.0;
  for (double v : all_evals) clipped_trace += std::max(v, 0.0);

  // Common water level: zero if the PSD clip already fits the budget,
  // otherwise the unique breakpoint of the sorted-eigenvalue scan.
  double mu = 0.0;
  if (clipped_trace > p_max) {
    std::sort(all_evals.begin(), all_evals.end(), std::greater<double>());
    double prefix = 0.0;
    for (std::size_t k = 1; k <= all_evals.size(); ++k) {
      prefix += all_evals[k - 1];
      const double candidate = (prefix - p_max) / static_cast<double>(k);
      if (all_evals[k - 1] > candidate) mu = candidate;
    }
  }

  out.n_users = raw.n_users;
  out.mats.resize(n_mats);
  for (std::size_t i = 0; i < n_mats; ++i) {
    lam = eigs[i].eigenvalues();
    for (Eigen::Index r = 0; r < lam.size(); ++r) lam(r) = std::max(lam(r) - mu, 0.0);
    const CMat& q = eigs[i].eigenvectors();
    scaled.noalias() = q * lam.asDiagonal();
    herm.noalias() = scaled * q.adjoint();
    out.mats[i] = 0.5 * (herm + herm.adjoint());
  }
}

TransmitCovariances project_covariances(const TransmitCovariances& raw, double p_max) {
  TransmitCovariances out;
  project_covariances_into(raw, p_max, out);
  return out;
}

StarRisProfile project_star_profile(const CVec& stacked, Rng& rng) {
  StarRisProfile raw = StarRisProfile::from_stacked(stacked);
  const Eigen::Index n = raw.theta_r.size();
  StarRisProfile out;
  out.theta_r = CVec::Zero(n);
  out.theta_t = CVec::Zero(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const cxd r = raw.theta_r(m);
    const cxd t = raw.theta_t(m);
    const double norm = std::sqrt(std::norm(r) + std::norm(t));
    if (norm > 0.0) {
      out.theta_r(m) = r / norm;
      out.theta_t(m) = t / norm;
    } else {
      cxd a = rng.cnormal(), b = rng.cnormal();
      double nn = std::sqrt(std::norm(a) + std::norm(b));
      while (!(nn > 0.0)) {
        a = rng.cnormal();
        b = rng.cnormal();
        nn = std::sqrt(std::norm(a) + std::norm(b));
      }
      out.theta_r(m) = a / nn;
      out.theta_t(m) = b / nn;
    }
  }
  return out;
}

StarRisProfile crirs_project_profile(const CVec& stacked, SystemVariant variant, Rng& rng) {
  if (variant != SystemVariant::ConventionalRis)
    throw std::invalid_argument("single-sided projection requires the conventional-surface variant");
  StarRisProfile raw = StarRisProfile::from_stacked(stacked);
  const Eigen::Index n = raw.theta_r.size();
  if (n % 2 != 0)
    throw std::invalid_argument("conventional-surface variant needs an even element count");
  StarRisProfile out;
  out.theta_r = CVec::Zero(n);
  out.theta_t = CVec::Zero(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const bool reflect_side = m < n / 2;
    const cxd v = reflect_side ? raw.theta_r(m) : raw.theta_t(m);
    const double mag = std::abs(v);
    const cxd unit = mag > 0.0 ? v / mag : random_unit_phase(rng);
    if (reflect_side)
      out.theta_r(m) = unit;
    else
      out.theta_t(m) = unit;
  }
  return out;
}

StarRisProfile project_profile(const CVec& stacked, SystemVariant variant, Rng& rng) {
  switch (variant) {
    case SystemVariant::Star:
      return project_star_profile(stacked, rng);
    case SystemVariant::ConventionalRis:
      return crirs_project_profile(stacked, variant, rng);
    case SystemVariant::NoRis:
      return StarRisProfile::from_stacked(stacked);
  }
  throw std::logic_error("unknown system variant");
}

CVec optimal_receive_beamformer(const ChannelSet& channels, const CMat& sigma, int l,
                                const SensingSpec& spec) {
  const int n_targets = channels.n_targets();
  if (l < 0 || l >= n_targets) throw std::invalid_argument("target index out of range");
  const Eigen::Index n_rx = channels.v_r.rows();

  const auto illum = target_illumination(channels, sigma);
  const CVec v_l = channels.v_r.col(l);
  const double numerator_scale = spec.mean_rcs * illum[static_cast<std::size_t>(l)];
  if (!(numerator_scale * v_l.squaredNorm() > 0.0)) {
    CVec e1 = CVec::Zero(n_rx);
    e1(0) = 1.0;
    return e1;
  }

  CMat den = CMat::Identity(n_rx, n_rx) + channels.g_si * sigma * channels.g_si.adjoint();
  for (int jdx = 0; jdx < n_targets; ++jdx) {
    if (jdx == l) continue;
    const CVec v_j = channels.v_r.col(jdx);
    den += (spec.mean_rcs * illum[static_cast<std::size_t>(jdx)]) * (v_j * v_j.adjoint());
  }
  hermitize(den);

  // Reduce the generalized pair (rank-1 numerator, PD denominator) to a
  // standard Hermitian eigenproblem via the Cholesky factor of the denominator.
  Eigen::LLT<CMat> chol(den);
  if (chol.info() != Eigen::Success)
    throw std::runtime_error("beamformer denominator factorization failed");
  const CMat lmat = chol.matrixL();
  const CVec w = lmat.triangularView<Eigen::Lower>().solve(v_l);
  const CMat reduced = numerator_scale * (w * w.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> es(reduced);
  if (es.info() != Eigen::Success) throw std::runtime_error("beamformer eigensolve failed");
  const CVec u = es.eigenvectors().col(n_rx - 1);
  CVec phi = lmat.adjoint().triangularView<Eigen::Upper>().solve(u);
  phi /= phi.norm();

  // Deterministic global phase: rotate the largest-magnitude entry (first on
  // ties) onto the nonnegative real axis.
  Eigen::Index best = 0;
  double best_mag = std::abs(phi(0));
  for (Eigen::Index i = 1; i < phi.size(); ++i) {
    const double mag = std::abs(phi(i));
    if (mag > best_mag) {
      best = i;
      best_mag = mag;
    }
  }
  if (best_mag > 0.0) phi *= std::conj(phi(best)) / best_mag;
  return phi;
}

ReceiveBeamformers optimal_receive_beamformers(const ChannelSet& channels, const CMat& sigma,
                                               const SensingSpec& spec) {
  ReceiveBeamformers out;
  const int n_targets = channels.n_targets();
  out.phis.reserve(static_cast<std::size_t>(n_targets));
  for (int l = 0; l < n_targets; ++l)
    out.phis.push_back(optimal_receive_beamformer(channels, sigma, l, spec));
  return out;
}

}  // namespace starsec
