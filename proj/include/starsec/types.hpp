#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace starsec {

using cxd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Vec3 = Eigen::Vector3d;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double nats_to_bits(double nats) { return nats / M_LN2; }

// Re tr(a^H b); real-valued Frobenius inner product on complex matrices.
inline double re_inner(const CMat& a, const CMat& b) {
  return a.conjugate().cwiseProduct(b).sum().real();
}

inline CMat hermitized(const CMat& m) { return 0.5 * (m + m.adjoint()); }
inline void hermitize(CMat& m) { m = hermitized(m); }

inline double max_asymmetry(const CMat& m) {
  if (m.size() == 0) return 0.0;
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

// Transmit covariances: one per communication user followed by one per
// sensing stream, all n_tx x n_tx Hermitian PSD, jointly trace-capped.
struct TransmitCovariances {
  std::vector<CMat> mats;
  int n_users = 0;

  int n_total() const { return static_cast<int>(mats.size()); }
  int n_sensing() const { return n_total() - n_users; }
  const CMat& comm(int k) const { return mats[static_cast<std::size_t>(k)]; }
  const CMat& sensing(int l) const { return mats[static_cast<std::size_t>(n_users + l)]; }
  CMat& comm(int k) { return mats[static_cast<std::size_t>(k)]; }
  CMat& sensing(int l) { return mats[static_cast<std::size_t>(n_users + l)]; }

  double total_trace() const {
    double t = 0.0;
    for (const auto& m : mats) t += m.trace().real();
    return t;
  }

  static TransmitCovariances zeros(int n_tx, int n_users, int n_sensing) {
    TransmitCovariances j;
    j.n_users = n_users;
    j.mats.assign(static_cast<std::size_t>(n_users + n_sensing), CMat::Zero(n_tx, n_tx));
    return j;
  }
};

// Element-wise power-splitting profile: |theta_r[m]|^2 + |theta_t[m]|^2 = 1.
struct StarRisProfile {
  CVec theta_r;
  CVec theta_t;

  int n_elements() const { return static_cast<int>(theta_r.size()); }

  CVec stacked() const {
    CVec s(2 * theta_r.size());
    s << theta_r, theta_t;
    return s;
  }

  static StarRisProfile from_stacked(const CVec& s) {
    if (s.size() % 2 != 0) throw std::invalid_argument("stacked profile length must be even");
    StarRisProfile p;
    const Eigen::Index n = s.size() / 2;
    p.theta_r = s.head(n);
    p.theta_t = s.tail(n);
    return p;
  }

  // Equal power split with zero phase on both sides.
  static StarRisProfile power_split_init(int n_elements) {
    StarRisProfile p;
    p.theta_r = CVec::Constant(n_elements, cxd(std::sqrt(0.5), 0.0));
    p.theta_t = p.theta_r;
    return p;
  }

  double max_pair_error() const {
    double worst = 0.0;
    for (Eigen::Index m = 0; m < theta_r.size(); ++m) {
      const double s = std::norm(theta_r[m]) + std::norm(theta_t[m]);
      worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
  }
};

struct ReceiveBeamformers {
  std::vector<CVec> phis;  // one unit-norm n_rx vector per sensing stream
};

// Per-stream sensing-rate floors (nats) plus the mean reflection gain.
struct SensingSpec {
  std::vector<double> delta;
  double mean_rcs = 0.5;

  static SensingSpec uniform(double sinr_threshold_linear, int n_targets, double mean_rcs) {
    SensingSpec s;
    s.delta.assign(static_cast<std::size_t>(n_targets), std::log1p(sinr_threshold_linear));
    s.mean_rcs = mean_rcs;
    return s;
  }
};

}  // namespace starsec
