#pragma once

#include <vector>

#include "starsec/scenario.hpp"
#include "starsec/types.hpp"

namespace starsec {

// Per-user downlink channels for a fixed surface profile. Cached by the
// solver because they are the only profile-dependent quantity.
struct EffectiveChannels {
  std::vector<CMat> z;  // n_user_antennas x n_tx each
};

CMat effective_channel(const ChannelSet& channels, const StarRisProfile& theta, int k);
EffectiveChannels effective_channels(const ChannelSet& channels, const StarRisProfile& theta);
// In-place variant for line-search loops: reuses the caller's storage.
void effective_channels_into(const ChannelSet& channels, const StarRisProfile& theta,
                             EffectiveChannels& zs);

// ln det(I + Y^{-1/2} X Y^{-1/2}) for Hermitian X and Hermitian PD Y,
// evaluated through Cholesky solves. Returns NaN when a factorization
// fails (indefinite input), which callers treat as "reject this point".
double logdet_ratio(const CMat& x, const CMat& y);

double secrecy_rate(const ChannelSet& channels, const TransmitCovariances& j,
                    const StarRisProfile& theta, int k);
double sum_secrecy_rate(const ChannelSet& channels, const TransmitCovariances& j,
                        const StarRisProfile& theta);

double sensing_sinr(const ChannelSet& channels, const TransmitCovariances& j, const CVec& phi,
                    int l, const SensingSpec& spec);
double sensing_rate(const ChannelSet& channels, const TransmitCovariances& j, const CVec& phi,
                    int l, const SensingSpec& spec);

double constraint_residual(double delta_l, double tau_l, double sensing_rate_l);
double constraint_residual(const ChannelSet& channels, const TransmitCovariances& j,
                           const CVec& phi, int l, const SensingSpec& spec, double tau_l);

double augmented_objective(const ChannelSet& channels, const TransmitCovariances& j,
                           const StarRisProfile& theta, const std::vector<double>& tau,
                           const std::vector<double>& nu, double rho,
                           const ReceiveBeamformers& phis, const SensingSpec& spec);

// Full evaluation with per-term breakdown; `finite` is false when any
// log-det factorization failed (possible only off the feasible set).
struct ObjectiveBreakdown {
  double augmented = 0.0;
  double true_objective = 0.0;
  std::vector<double> user_rates;
  std::vector<double> sensing_rates;
  std::vector<double> residuals;
  bool finite = true;
};

ObjectiveBreakdown evaluate_objective(const ChannelSet& channels, const EffectiveChannels& zs,
                                      const TransmitCovariances& j, const std::vector<double>& tau,
                                      const std::vector<double>& nu, double rho,
                                      const ReceiveBeamformers& phis, const SensingSpec& spec);

// Pieces shared between the objective and its gradients.

// Sum of all covariances.
CMat covariance_sum(const TransmitCovariances& j);

// Quadratic forms v_t,l Sigma v_t,l^H for every sensing stream.
std::vector<double> target_illumination(const ChannelSet& channels, const CMat& sigma);

std::vector<double> sensing_rates_cached(const ChannelSet& channels, const CMat& sigma,
                                         const ReceiveBeamformers& phis, const SensingSpec& spec);

double penalty_term(const std::vector<double>& sensing_rates, const std::vector<double>& tau,
                    const std::vector<double>& nu, double rho, const SensingSpec& spec,
                    std::vector<double>* residuals_out);

// Sum of secrecy rates for fixed effective channels; NaN-safe variant used
// inside line searches (sets *ok=false instead of throwing).
double sum_secrecy_cached(const ChannelSet& channels, const EffectiveChannels& zs,
                          const TransmitCovariances& j, std::vector<double>* user_rates_out,
                          bool* ok);

}  // namespace starsec
