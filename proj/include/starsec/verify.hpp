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

// Central finite-difference gradient of a real function of a Hermitian
// matrix, in the convention df = Re tr(G dX) for Hermitian directions dX.
CMat fd_grad_hermitian(const std::function<double(const CMat&)>& f, const CMat& x, double step);

// Central finite-difference gradient of a real function of a complex vector,
// in the conjugate-coordinate convention df = 2 Re(G^H dv).
CVec fd_grad_complex(const std::function<double(const CVec&)>& f, const CVec& v, double step);

double fd_scalar(const std::function<double(double)>& f, double x, double step);

// Independent oracle for the trace-capped PSD product projection: Dykstra
// alternation between the PSD cone and the total-trace halfspace.
TransmitCovariances dykstra_project_covariances(const TransmitCovariances& raw, double p_max,
                                                double tol = 1e-13, int max_iters = 20000);

// Synthetic problem with O(1)-scale channel entries; keeps finite differences
// well conditioned, unlike the physically scaled scenario channels.
struct OracleInstance {
  ChannelSet channels;
  SensingSpec spec;
  TransmitCovariances j;
  StarRisProfile theta;
  ReceiveBeamformers phis;
  std::vector<double> tau;
  std::vector<double> nu;
  double rho = 1.0;
};

struct OracleDims {
  int n_tx = 3;
  int n_rx = 3;
  int n_user_antennas = 2;
  int n_ris = 4;
  int n_users = 2;
  int n_targets = 2;
};

OracleInstance random_instance(std::uint64_t seed, const OracleDims& dims);

struct CheckReport {
  std::string name;
  bool passed = false;
  double worst = 0.0;
  std::string detail;
};

CheckReport check_gradients(std::uint64_t seed, int n_instances);
CheckReport check_projections(std::uint64_t seed, int n_instances);
CheckReport check_beamformer(std::uint64_t seed, int n_instances, int n_samples);
CheckReport check_tau(std::uint64_t seed, int n_tuples);

std::vector<CheckReport> run_all_checks(std::uint64_t seed);

}  // namespace starsec
