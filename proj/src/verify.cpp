#include "starsec/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "starsec/optimizer.hpp"

namespace starsec {

namespace {

double central_diff(const std::function<double(const CMat&)>& f, const CMat& x, const CMat& dir,
                    double step) {
  return (f(x + step * dir) - f(x - step * dir)) / (2.0 * step);
}

CMat psd_clip(const CMat& m) {
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitized(m));
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  Eigen::VectorXd lam = es.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) lam(i) = std::max(lam(i), 0.0);
  const CMat& q = es.eigenvectors();
  return hermitized(q * lam.asDiagonal() * q.adjoint());
}

double rel_error(const CMat& got, const CMat& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-12);
}

double rel_error(const CVec& got, const CVec& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-12);
}

}  // namespace

CMat fd_grad_hermitian(const std::function<double(const CMat&)>& f, const CMat& x, double step) {
  const Eigen::Index n = x.rows();
  CMat g = CMat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    CMat dir = CMat::Zero(n, n);
    dir(i, i) = 1.0;
    g(i, i) = central_diff(f, x, dir, step);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      CMat sym = CMat::Zero(n, n);
      sym(i, j) = 1.0;
      sym(j, i) = 1.0;
      CMat anti = CMat::Zero(n, n);
      anti(i, j) = cxd(0.0, 1.0);
      anti(j, i) = cxd(0.0, -1.0);
      const double d_sym = central_diff(f, x, sym, step);
      const double d_anti = central_diff(f, x, anti, step);
      g(i, j) = 0.5 * cxd(d_sym, d_anti);
      g(j, i) = std::conj(g(i, j));
    }
  }
  return g;
}

CVec fd_grad_complex(const std::function<double(const CVec&)>& f, const CVec& v, double step) {
  const Eigen::Index n = v.size();
  CVec g = CVec::Zero(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    CVec dir = CVec::Zero(n);
    dir(m) = 1.0;
    const double d_re = (f(v + step * dir) - f(v - step * dir)) / (2.0 * step);
    dir(m) = cxd(0.0, 1.0);
    const double d_im = (f(v + step * dir) - f(v - step * dir)) / (2.0 * step);
    g(m) = 0.5 * cxd(d_re, d_im);
  }
  return g;
}

double fd_scalar(const std::function<double(double)>& f, double x, double step) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

TransmitCovariances dykstra_project_covariances(const TransmitCovariances& raw, double p_max,
                                                double tol, int max_iters) {
  if (!(p_max > 0.0)) throw std::invalid_argument("power budget must be positive");
  const std::size_t n_mats = raw.mats.size();
  double dim_total = 0.0;
  double input_scale = 0.0;
  std::vector<CMat> x(n_mats), p(n_mats), q(n_mats);
  for (std::size_t i = 0; i < n_mats; ++i) {
    x[i] = hermitized(raw.mats[i]);
    p[i] = CMat::Zero(x[i].rows(), x[i].cols());
    q[i] = p[i];
    dim_total += static_cast<double>(x[i].rows());
    input_scale += x[i].squaredNorm();
  }
  const double stop = tol * std::max(1.0, std::sqrt(input_scale));

  std::vector<CMat> y(n_mats);
  for (int iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < n_mats; ++i) {
      const CMat z = x[i] + p[i];
      y[i] = psd_clip(z);
      p[i] = z - y[i];
    }
    double total_trace = 0.0;
    for (std::size_t i = 0; i < n_mats; ++i) total_trace += (y[i] + q[i]).trace().real();
    const double shift = std::max(0.0, (total_trace - p_max) / dim_total);
    double gap_sq = 0.0;
    for (std::size_t i = 0; i < n_mats; ++i) {
      const CMat z = y[i] + q[i];
      CMat xn = z;
      xn.diagonal().array() -= shift;
      q[i] = z - xn;
      gap_sq += (xn - y[i]).squaredNorm();
      x[i] = std::move(xn);
    }
    if (std::sqrt(gap_sq) <= stop) break;
  }

  TransmitCovariances out;
  out.n_users = raw.n_users;
  out.mats = std::move(y);
  return out;
}

OracleInstance random_instance(std::uint64_t seed, const OracleDims& d) {
  if (d.n_tx < 1 || d.n_rx < 1 || d.n_user_antennas < 1 || d.n_users < 1 || d.n_targets < 1 ||
      d.n_ris < 0)
    throw std::invalid_argument("oracle dimensions must be positive");
  Rng rng(seed);
  OracleInstance inst;
  ChannelSet& ch = inst.channels;
  ch.h_bs = rng.cnormal_matrix(d.n_ris, d.n_tx);
  for (int k = 0; k < d.n_users; ++k) {
    ch.h_bk.push_back(rng.cnormal_matrix(d.n_user_antennas, d.n_tx));
    ch.h_sk.push_back(0.5 * rng.cnormal_matrix(d.n_user_antennas, d.n_ris));
    ch.user_in_reflection.push_back(k % 2 == 0);
  }
  ch.v_t = rng.cnormal_matrix(d.n_targets, d.n_tx);
  ch.v_r = rng.cnormal_matrix(d.n_rx, d.n_targets);
  ch.g_si = 0.5 * rng.cnormal_matrix(d.n_rx, d.n_tx);

  inst.spec.mean_rcs = 0.5;
  for (int l = 0; l < d.n_targets; ++l) inst.spec.delta.push_back(0.2 + 0.15 * l);

  inst.j = TransmitCovariances::zeros(d.n_tx, d.n_users, d.n_targets);
  for (auto& m : inst.j.mats) {
    const CMat a = rng.cnormal_matrix(d.n_tx, d.n_tx);
    m = hermitized((0.15 / d.n_tx) * (a * a.adjoint()));
  }

  CVec raw_theta(2 * d.n_ris);
  for (Eigen::Index i = 0; i < raw_theta.size(); ++i) raw_theta(i) = rng.cnormal();
  inst.theta = project_star_profile(raw_theta, rng);

  for (int l = 0; l < d.n_targets; ++l) inst.phis.phis.push_back(rng.unit_vector(d.n_rx));
  for (int l = 0; l < d.n_targets; ++l) {
    inst.tau.push_back(0.4 * rng.uniform());
    inst.nu.push_back(0.6 * rng.uniform());
  }
  inst.rho = 0.5 + rng.uniform();
  return inst;
}

CheckReport check_gradients(std::uint64_t seed, int n_instances) {
  constexpr double kStep = 1e-6;
  const OracleDims cycle[] = {
      {3, 3, 2, 4, 2, 2}, {2, 2, 1, 2, 1, 1}, {4, 4, 2, 8, 2, 2},
      {3, 2, 2, 6, 1, 2}, {4, 3, 1, 4, 2, 1},
  };
  double worst = 0.0;
  std::string worst_what = "none";

  auto note = [&](double err, const std::string& what) {
    if (err > worst) {
      worst = err;
      worst_what = what;
    }
  };

  for (int i = 0; i < n_instances; ++i) {
    const OracleInstance inst = random_instance(seed + static_cast<std::uint64_t>(i),
                                                cycle[i % (sizeof(cycle) / sizeof(cycle[0]))]);
    const ChannelSet& ch = inst.channels;
    const int n_users = ch.n_users();
    const int n_total = inst.j.n_total();

    // Per-user secrecy rate, both gradient branches.
    for (int k = 0; k < n_users; ++k) {
      for (int varpi : {k, (k + 1) % n_total}) {
        auto f = [&, k, varpi](const CMat& x) {
          TransmitCovariances j2 = inst.j;
          j2.mats[static_cast<std::size_t>(varpi)] = x;
          return secrecy_rate(ch, j2, inst.theta, k);
        };
        const CMat fd = fd_grad_hermitian(f, inst.j.mats[static_cast<std::size_t>(varpi)], kStep);
        const CMat got = grad_secrecy_wrt_J(ch, inst.j, inst.theta, k, varpi);
        note(rel_error(got, fd), "secrecy/J");
      }
    }

    // Per-target sensing rate; the gradient is the same for every block.
    for (int l = 0; l < ch.n_targets(); ++l) {
      const CVec& phi = inst.phis.phis[static_cast<std::size_t>(l)];
      for (int varpi : {0, n_total - 1}) {
        auto f = [&, l, varpi](const CMat& x) {
          TransmitCovariances j2 = inst.j;
          j2.mats[static_cast<std::size_t>(varpi)] = x;
          return sensing_rate(ch, j2, phi, l, inst.spec);
        };
        const CMat fd = fd_grad_hermitian(f, inst.j.mats[static_cast<std::size_t>(varpi)], kStep);
        const CMat got = grad_sensing_wrt_J(ch, inst.j, phi, l, inst.spec);
        note(rel_error(got, fd), "sensing/J");
      }
    }

    // Augmented objective over every covariance block.
    const CovariancesGradient aug = grad_augmented_wrt_J(ch, inst.j, inst.theta, inst.tau, inst.nu,
                                                         inst.rho, inst.phis, inst.spec);
    for (int varpi = 0; varpi < n_total; ++varpi) {
      auto f = [&, varpi](const CMat& x) {
        TransmitCovariances j2 = inst.j;
        j2.mats[static_cast<std::size_t>(varpi)] = x;
        return augmented_objective(ch, j2, inst.theta, inst.tau, inst.nu, inst.rho, inst.phis,
                                   inst.spec);
      };
      const CMat fd = fd_grad_hermitian(f, inst.j.mats[static_cast<std::size_t>(varpi)], kStep);
      note(rel_error(aug.mats[static_cast<std::size_t>(varpi)], fd), "augmented/J");
    }

    // Augmented objective over the stacked surface profile.
    auto f_theta = [&](const CVec& v) {
      return augmented_objective(ch, inst.j, StarRisProfile::from_stacked(v), inst.tau, inst.nu,
                                 inst.rho, inst.phis, inst.spec);
    };
    const CVec fd_theta = fd_grad_complex(f_theta, inst.theta.stacked(), kStep);
    const ProfileGradient gt = grad_augmented_wrt_theta(ch, inst.j, inst.theta);
    note(rel_error(gt.stacked(), fd_theta), "augmented/theta");
  }

  CheckReport rep;
  rep.name = "gradients";
  rep.worst = worst;
  rep.passed = worst < 1e-5;
  std::ostringstream os;
  os << "worst relative error " << worst << " (" << worst_what << ") over " << n_instances
     << " instances";
  rep.detail = os.str();
  return rep;
}

CheckReport check_projections(std::uint64_t seed, int n_instances) {
  Rng rng(seed);
  double worst = 0.0;
  double worst_pair = 0.0;
  for (int i = 0; i < n_instances; ++i) {
    const int n_tx = 1 + static_cast<int>(rng.uniform() * 3.0);
    const int n_mats = 1 + static_cast<int>(rng.uniform() * 3.0);
    TransmitCovariances raw;
    raw.n_users = n_mats;
    for (int m = 0; m < n_mats; ++m) {
      const CMat a = rng.cnormal_matrix(n_tx, n_tx);
      raw.mats.push_back(hermitized(a + a.adjoint()));
    }
    const double p_max = 0.5 + 2.0 * rng.uniform();
    const TransmitCovariances got = project_covariances(raw, p_max);
    const TransmitCovariances oracle = dykstra_project_covariances(raw, p_max);
    double diff = 0.0;
    for (std::size_t m = 0; m < raw.mats.size(); ++m)
      diff = std::max(diff, (got.mats[m] - oracle.mats[m]).norm());
    worst = std::max(worst, diff);

    // Surface profile: feasibility, idempotence, degenerate-pair handling.
    const int n_ris = 2 + 2 * static_cast<int>(rng.uniform() * 3.0);
    CVec stacked(2 * n_ris);
    for (Eigen::Index r = 0; r < stacked.size(); ++r) stacked(r) = 2.0 * rng.cnormal();
    stacked(0) = 0.0;
    stacked(n_ris) = 0.0;  // force one degenerate pair
    const StarRisProfile prof = project_star_profile(stacked, rng);
    worst_pair = std::max(worst_pair, prof.max_pair_error());
    const StarRisProfile again = project_star_profile(prof.stacked(), rng);
    worst_pair = std::max(worst_pair, (again.stacked() - prof.stacked()).norm());
    const StarRisProfile sided =
        crirs_project_profile(stacked, SystemVariant::ConventionalRis, rng);
    worst_pair = std::max(worst_pair, sided.max_pair_error());
  }
  CheckReport rep;
  rep.name = "projections";
  rep.worst = std::max(worst, worst_pair);
  rep.passed = worst < 1e-6 && worst_pair < 1e-12;
  std::ostringstream os;
  os << "worst oracle gap " << worst << ", worst profile feasibility error " << worst_pair
     << " over " << n_instances << " instances";
  rep.detail = os.str();
  return rep;
}

CheckReport check_beamformer(std::uint64_t seed, int n_instances, int n_samples) {
  Rng rng(seed);
  double worst_margin = 0.0;  // positive if a sample ever beat the closed form
  double worst_norm = 0.0;
  for (int i = 0; i < n_instances; ++i) {
    OracleDims dims{3, 3, 2, 4, 2, 2};
    if (i % 3 == 1) dims = {4, 4, 2, 4, 2, 3};
    if (i % 3 == 2) dims = {2, 2, 1, 2, 1, 1};
    const OracleInstance inst = random_instance(seed + 100 + static_cast<std::uint64_t>(i), dims);
    const CMat sigma = covariance_sum(inst.j);
    for (int l = 0; l < inst.channels.n_targets(); ++l) {
      const CVec phi_opt = optimal_receive_beamformer(inst.channels, sigma, l, inst.spec);
      worst_norm = std::max(worst_norm, std::abs(phi_opt.norm() - 1.0));
      const double gamma_opt = sensing_sinr(inst.channels, inst.j, phi_opt, l, inst.spec);
      for (int s = 0; s < n_samples; ++s) {
        const CVec phi = rng.unit_vector(inst.channels.n_rx());
        const double gamma = sensing_sinr(inst.channels, inst.j, phi, l, inst.spec);
        worst_margin = std::max(worst_margin, gamma - gamma_opt);
      }
    }
  }
  CheckReport rep;
  rep.name = "beamformer";
  rep.worst = std::max(worst_margin, worst_norm);
  rep.passed = worst_margin <= 1e-10 && worst_norm <= 1e-12;
  std::ostringstream os;
  os << "best sampled SINR excess " << worst_margin << ", worst norm error " << worst_norm
     << " over " << n_instances << " instances x " << n_samples << " samples";
  rep.detail = os.str();
  return rep;
}

CheckReport check_tau(std::uint64_t seed, int n_tuples) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < n_tuples; ++i) {
    const double r = 3.0 * rng.uniform();
    const double delta = 2.0 * rng.uniform();
    const double nu = rng.uniform() - 0.3;
    const double rho_pick = rng.uniform();
    const double rho = rho_pick < 0.25 ? 10.0 : (rho_pick < 0.5 ? 1.0 : 0.05 + rho_pick);
    const double got = update_tau(r, delta, nu, rho);

    // Penalty section in tau: minimize nu*g + g^2/(2 rho), g = delta + tau - r.
    const double hi = r + 10.0;
    double best_tau = 0.0;
    double best_val = std::numeric_limits<double>::infinity();
    const double step = 1e-4;
    const long n_steps = static_cast<long>(hi / step);
    for (long s = 0; s <= n_steps; ++s) {
      const double tau = static_cast<double>(s) * step;
      const double g = delta + tau - r;
      const double val = nu * g + g * g / (2.0 * rho);
      if (val < best_val) {
        best_val = val;
        best_tau = tau;
      }
    }
    worst = std::max(worst, std::abs(got - best_tau));
  }
  CheckReport rep;
  rep.name = "tau-update";
  rep.worst = worst;
  rep.passed = worst <= 2e-4;
  std::ostringstream os;
  os << "worst |closed form - scan| " << worst << " over " << n_tuples << " tuples";
  rep.detail = os.str();
  return rep;
}

std::vector<CheckReport> run_all_checks(std::uint64_t seed) {
  std::vector<CheckReport> reports;
  reports.push_back(check_gradients(seed, 20));
  reports.push_back(check_projections(seed + 1000, 50));
  reports.push_back(check_beamformer(seed + 2000, 20, 10000));
  reports.push_back(check_tau(seed + 3000, 100));
  return reports;
}

}  // namespace starsec
