#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "nrr/data_gen.hpp"
#include "nrr/nrr_model.hpp"
#include "nrr/tensor.hpp"

namespace nrr::training {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  double learning_rate = 0.05;
  double lambda = 0.0;  // envy penalty multiplier
  std::vector<double> tau_grid = {1.0, 0.1, 0.01};
  std::vector<double> tau_prime_grid = {1.0, 0.1, 0.01};
  std::uint64_t seed = 1;
  std::size_t rank = 3;
};

struct CandidateReport {
  double tau = 0.0;
  double tau_prime = 0.0;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_val_hd;
  bool excluded = false;  // training loss failed to decrease over the run
  double final_val_hd = 0.0;
};

struct TrainReport {
  std::vector<CandidateReport> candidates;
  std::size_t selected_index = 0;
  double selected_tau = 0.0;
  double selected_tau_prime = 0.0;
  std::uint64_t seed = 0;
};

// Mean over columns of the cross entropy between the one-hot target column
// and the predicted column distribution.
ad::Tensor cross_entropy_alloc_loss(const fair::IntegralAllocation& target,
                                    const ad::Tensor& pred);

// Mean over agents of their total envy toward the fractional bundles,
// clamped at zero per pair; the multiplier is applied by the caller.
ad::Tensor envy_penalty(const fair::ValuationProfile& profile, const ad::Tensor& pred);

ad::Tensor combined_loss(const fair::IntegralAllocation& target, const ad::Tensor& pred,
                         const fair::ValuationProfile& profile, double lambda);

// Grid search over tau x tau_prime: each candidate trains from the same
// seeded initialization with mini-batch gradient descent, candidates whose
// training never achieved a decrease (no later epoch mean below the first
// epoch's; vacuous for single-epoch runs) are excluded, and the survivor with
// the lowest final validation Hamming distance wins. Fully deterministic
// given the config and datasets.
std::pair<model::NrrParams, TrainReport> train(const data::Dataset& train_set,
                                               const data::Dataset& val_set,
                                               const TrainConfig& config);

// Per-epoch curves for every candidate:
// epoch,candidate_tau,candidate_tau_prime,train_loss,val_hd.
void write_loss_curve_csv(std::ostream& out, const TrainReport& report);
std::string loss_curve_to_csv(const TrainReport& report);

std::string report_to_json(const TrainReport& report);

}  // namespace nrr::training
