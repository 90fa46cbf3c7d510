#pragma once

#include "starsec/model.hpp"
#include "starsec/rng.hpp"
#include "starsec/scenario.hpp"
#include "starsec/types.hpp"

namespace starsec {

// Euclidean projection onto {J_1..J_n : each PSD, sum of traces <= p_max}.
// Inputs must already be Hermitian to within 1e-6.
TransmitCovariances project_covariances(const TransmitCovariances& raw, double p_max);
// In-place variant for line-search loops: reuses the caller's storage.
void project_covariances_into(const TransmitCovariances& raw, double p_max,
                              TransmitCovariances& out);

// Per-element normalization onto the power-splitting circle |r|^2 + |t|^2 = 1.
// A (0, 0) pair is replaced by a random unit pair drawn from rng.
StarRisProfile project_star_profile(const CVec& stacked, Rng& rng);

// Half-and-half single-sided surface: the first half of the elements keep a
// unit-modulus reflection coefficient only, the second half transmission only.
StarRisProfile crirs_project_profile(const CVec& stacked, SystemVariant variant, Rng& rng);

// Variant dispatcher used by the solver; NoRis passes the profile through.
StarRisProfile project_profile(const CVec& stacked, SystemVariant variant, Rng& rng);

// Unit-norm maximizer of the sensing SINR for stream l at transmit covariance
// sum sigma. Sigma = 0 degenerates to the first canonical basis vector.
CVec optimal_receive_beamformer(const ChannelSet& channels, const CMat& sigma, int l,
                                const SensingSpec& spec);

ReceiveBeamformers optimal_receive_beamformers(const ChannelSet& channels, const CMat& sigma,
                                               const SensingSpec& spec);

}  // namespace starsec
