#pragma once

#include "nrr/fairdiv.hpp"
#include "nrr/matrix.hpp"
#include "nrr/tensor.hpp"

namespace nrr::relax {

// Exact result of a single picking round: agents 1..n take turns once, each
// choosing the argmax of their row over the goods still available (ties to
// the earlier good). Row i of the output is the one-hot of agent i's pick.
// Requires n <= m so every agent can pick.
Matrix one_round(const fair::ValuationProfile& profile);

// Temperature relaxation of one picking round. Availability lives in a soft
// mask c in [0,1]^m; each row takes a softmax over its shifted values times
// the mask, scaled by 1/tau, and the mask is damped by what the row took.
// Output rows sum to 1 at any temperature.
ad::Tensor soft_round(const ad::Tensor& valuations, double tau);
Matrix soft_round(const fair::ValuationProfile& profile, double tau);

// Relaxation of the full picking procedure: stack k = ceil(m/n) copies of the
// valuation matrix, run one soft round over the stack, then sum the k row
// blocks. Column sums may exceed 1 at finite temperature; no normalization
// happens here.
ad::Tensor soft_rr(const ad::Tensor& valuations, double tau);
Matrix soft_rr(const fair::ValuationProfile& profile, double tau);

// Vertical stack of k copies; k < 1 is rejected.
Matrix repeat_rows(const Matrix& m, std::size_t k);

}  // namespace nrr::relax
