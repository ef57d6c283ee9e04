#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nrr/fairdiv.hpp"
#include "nrr/matrix.hpp"
#include "nrr/tensor.hpp"

namespace nrr::model {

// Column normalization guard for the training-time output.
constexpr double kNormalizationEpsilon = 1e-12;

// Hidden layout of the scoring MLP: two tanh layers of width 32, linear head.
inline constexpr std::size_t kMlpHiddenWidth = 32;

struct MlpLayer {
  Matrix weight;  // fan_in x fan_out
  Matrix bias;    // 1 x fan_out
};

// Everything needed to run the model: the scorer weights plus the frozen
// run-level choices (embedding rank and the two temperatures).
struct NrrParams {
  std::size_t rank = 0;
  double tau = 1.0;
  double tau_prime = 1.0;
  std::uint64_t init_seed = 0;
  std::vector<MlpLayer> layers;

  // Fresh weights drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)],
  // layer by layer, weight entries row-major then bias.
  static NrrParams init(std::size_t rank, double tau, double tau_prime, std::uint64_t seed);

  std::size_t feature_width() const { return rank + 2; }
};

// The same parameters attached to the autodiff graph as trainable leaves.
struct NrrParamTensors {
  std::size_t rank = 0;
  double tau = 1.0;
  double tau_prime = 1.0;
  std::vector<std::pair<ad::Tensor, ad::Tensor>> layers;  // (weight, bias)
};

NrrParamTensors make_trainable(const NrrParams& params);
// Copies the current leaf values back into a plain parameter set.
NrrParams snapshot(const NrrParamTensors& tensors, std::uint64_t init_seed);
std::vector<ad::Tensor> parameter_list(const NrrParamTensors& tensors);

struct TruncatedSvd {
  Matrix left_vectors;               // n x r, orthonormal columns
  std::vector<double> singular_values;  // length r, non-increasing
};

// Top-r singular structure of the valuation matrix, computed from the dense
// symmetric eigendecomposition of V * V^T. Each left vector is oriented so
// its largest-magnitude entry is nonnegative.
TruncatedSvd svd_top(const Matrix& v, std::size_t r);

// Agent embeddings U_r * Sigma_r; rows are per-agent coordinates.
Matrix svd_embeddings(const fair::ValuationProfile& profile, std::size_t r);

// [embeddings | row min | row max], width r + 2. Held outside the gradient
// graph: features depend on the valuations only, never on the weights.
Matrix agent_features(const fair::ValuationProfile& profile, std::size_t r);

// Row-wise MLP scores; one scalar per agent (n x 1 in the graph).
ad::Tensor score_agents(const Matrix& features, const NrrParamTensors& params);

// Exact count of strictly-smaller entries, earlier index breaking ties;
// always a permutation of 0..n-1.
std::vector<std::size_t> rank_vector(const std::vector<double>& a);

// a + rank(a) with the rank addend outside the graph; removes ties while
// preserving the strict order of a.
ad::Tensor tie_break(const ad::Tensor& a);
std::vector<double> tie_break_values(const std::vector<double>& a);

// Continuous relaxation of descending argsort: row p is a softmax peaked at
// the p-th largest entry of a. Rows sum to 1 at any temperature.
ad::Tensor soft_sort(const ad::Tensor& a, double tau_prime);

// Descending argsort of the tie-broken scores: position p holds the agent
// with the p-th largest tie-broken score.
fair::AgentPermutation hard_order(const std::vector<double>& scores);

// Training path: soft permutation, soft picking over the permuted profile,
// un-permute, then column normalization onto the simplex.
ad::Tensor nrr_forward_train(const fair::ValuationProfile& profile,
                             const NrrParamTensors& params);
ad::Tensor nrr_forward_train(const fair::ValuationProfile& profile, const Matrix& features,
                             const NrrParamTensors& params);

// Inference path: hard order from the exact score computation, then the exact
// picking procedure; the result is envy-free up to one good for any weights.
fair::AgentPermutation nrr_infer_order(const fair::ValuationProfile& profile,
                                       const NrrParams& params);
fair::AgentPermutation nrr_infer_order(const fair::ValuationProfile& profile,
                                       const Matrix& features, const NrrParams& params);
fair::IntegralAllocation nrr_infer(const fair::ValuationProfile& profile,
                                   const NrrParams& params);
fair::IntegralAllocation nrr_infer(const fair::ValuationProfile& profile, const Matrix& features,
                                   const NrrParams& params);

// Checkpoint document: rank, temperatures, seed, layer shapes and weights as
// decimal text with 17 significant digits; loading reproduces inference
// decisions bit-exactly.
std::string checkpoint_to_json(const NrrParams& params);
NrrParams checkpoint_from_json(const std::string& json_text);
void save_checkpoint(const NrrParams& params, const std::string& path);
NrrParams load_checkpoint(const std::string& path);

}  // namespace nrr::model
