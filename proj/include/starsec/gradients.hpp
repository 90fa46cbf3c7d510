#pragma once

#include <optional>
#include <vector>

#include "starsec/model.hpp"
#include "starsec/types.hpp"

namespace starsec {

// Conjugate-coordinate (Wirtinger) gradients. Ascent steps are taken as
// x <- x + mu * grad directly; covariance gradients are Hermitian so the
// step stays inside the Hermitian subspace.

struct CovariancesGradient {
  std::vector<CMat> mats;  // aligned with TransmitCovariances::mats
};

struct ProfileGradient {
  CVec grad_r;
  CVec grad_t;

  CVec stacked() const {
    CVec s(grad_r.size() + grad_t.size());
    s << grad_r, grad_t;
    return s;
  }
};

// d R_c,k / d conj(J_varpi); varpi indexes the full covariance list.
CMat grad_secrecy_wrt_J(const ChannelSet& channels, const TransmitCovariances& j,
                        const StarRisProfile& theta, int k, int varpi);

// d R_s,l / d conj(J_varpi); identical for every varpi.
CMat grad_sensing_wrt_J(const ChannelSet& channels, const TransmitCovariances& j, const CVec& phi,
                        int l, const SensingSpec& spec);

CovariancesGradient grad_augmented_wrt_J(const ChannelSet& channels, const TransmitCovariances& j,
                                         const StarRisProfile& theta, const std::vector<double>& tau,
                                         const std::vector<double>& nu, double rho,
                                         const ReceiveBeamformers& phis, const SensingSpec& spec);

ProfileGradient grad_augmented_wrt_theta(const ChannelSet& channels, const TransmitCovariances& j,
                                         const StarRisProfile& theta);

// Cached variants used by the solver; return nullopt when a factorization
// fails (possible at extrapolated, infeasible points).
std::optional<CovariancesGradient> grad_augmented_wrt_J_cached(
    const ChannelSet& channels, const EffectiveChannels& zs, const TransmitCovariances& j,
    const std::vector<double>& tau, const std::vector<double>& nu, double rho,
    const ReceiveBeamformers& phis, const SensingSpec& spec);

std::optional<ProfileGradient> grad_theta_cached(const ChannelSet& channels,
                                                 const EffectiveChannels& zs,
                                                 const TransmitCovariances& j);

}  // namespace starsec
