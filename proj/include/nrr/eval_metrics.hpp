#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "nrr/data_gen.hpp"
#include "nrr/fairdiv.hpp"

namespace nrr::eval {

// Normalized entrywise disagreement (1/2m) * sum |A - A_hat|, in [0, 1].
double hamming_distance(const fair::IntegralAllocation& target,
                        const fair::IntegralAllocation& pred);

double ef1_ratio(const std::vector<fair::ValuationProfile>& profiles,
                 const std::vector<fair::IntegralAllocation>& preds);

// 1 - UW(V, pred) / MUW(V); zero exactly when pred is welfare-optimal.
double uw_loss(const fair::ValuationProfile& profile, const fair::IntegralAllocation& pred);

// Descending order of row means, ties to the earlier agent.
fair::AgentPermutation mean_valuation_order(const fair::ValuationProfile& profile);

// Rank correlation over agent pairs, (concordant - discordant) / (n(n-1)/2);
// needs n >= 2 and strict orders (which AgentPermutation guarantees).
double kendall_tau(const fair::AgentPermutation& order_a, const fair::AgentPermutation& order_b);

struct ModelUnderEval {
  std::string name;
  std::function<fair::IntegralAllocation(const fair::ValuationProfile&)> allocate;
  // Optional: the agent order the model realizes; empty when the model has none.
  std::function<fair::AgentPermutation(const fair::ValuationProfile&)> order;
};

struct EvalSummary {
  std::string model;
  data::DatasetMeta dataset_meta;
  std::vector<double> hd;
  std::vector<bool> ef1;
  std::vector<double> uwloss;
  std::vector<double> kendall;  // empty when the model exposes no order
  double hd_mean = 0.0;
  double ef1_ratio = 0.0;
  double uwloss_mean = 0.0;
  double kendall_mean = 0.0;  // meaningful only when kendall is non-empty
};

EvalSummary evaluate(const ModelUnderEval& model, const data::Dataset& dataset);

// Rows: model,n,m,sample_index,hd,ef1,uwloss,kendall_tau with one aggregate
// row (sample_index = "mean") per summary.
void write_summary_csv(std::ostream& out, const std::vector<EvalSummary>& summaries);
std::string summaries_to_csv(const std::vector<EvalSummary>& summaries);

}  // namespace nrr::eval
