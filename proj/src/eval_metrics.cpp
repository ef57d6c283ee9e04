#include "nrr/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nrr/io_util.hpp"

namespace nrr::eval {

double hamming_distance(const fair::IntegralAllocation& target,
                        const fair::IntegralAllocation& pred) {
  if (target.agents() != pred.agents() || target.goods() != pred.goods()) {
    throw std::invalid_argument("hamming_distance: shape mismatch " +
                                std::to_string(target.agents()) + "x" +
                                std::to_string(target.goods()) + " vs " +
                                std::to_string(pred.agents()) + "x" +
                                std::to_string(pred.goods()));
  }
  std::size_t differing = 0;
  for (std::size_t j = 0; j < target.goods(); ++j) {
    if (target.owner(j) != pred.owner(j)) ++differing;
  }
  // each differing good contributes two unit entries
  return static_cast<double>(differing) / static_cast<double>(target.goods());
}

double ef1_ratio(const std::vector<fair::ValuationProfile>& profiles,
                 const std::vector<fair::IntegralAllocation>& preds) {
  if (profiles.empty()) throw std::invalid_argument("ef1_ratio: empty input");
  if (profiles.size() != preds.size()) {
    throw std::invalid_argument("ef1_ratio: list lengths disagree");
  }
  std::size_t good = 0;
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    if (fair::is_ef1(profiles[k], preds[k])) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(profiles.size());
}

double uw_loss(const fair::ValuationProfile& profile, const fair::IntegralAllocation& pred) {
  const double best = fair::utilitarian_welfare(profile, fair::muw_allocation(profile));
  if (best <= 0.0) {
    throw std::invalid_argument("uw_loss: maximal welfare is zero, the ratio is undefined");
  }
  return 1.0 - fair::utilitarian_welfare(profile, pred) / best;
}

fair::AgentPermutation mean_valuation_order(const fair::ValuationProfile& profile) {
  const std::size_t n = profile.agents();
  std::vector<double> means(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < profile.goods(); ++j) means[i] += profile.value(i, j);
    means[i] /= static_cast<double>(profile.goods());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&means](std::size_t a, std::size_t b) { return means[a] > means[b]; });
  return fair::AgentPermutation::from_order(std::move(order));
}

double kendall_tau(const fair::AgentPermutation& order_a, const fair::AgentPermutation& order_b) {
  const std::size_t n = order_a.size();
  if (n != order_b.size()) throw std::invalid_argument("kendall_tau: order lengths disagree");
  if (n < 2) throw std::invalid_argument("kendall_tau: needs at least two agents");
  long long concordant = 0;
  long long discordant = 0;
  for (std::size_t u = 0; u + 1 < n; ++u) {
    for (std::size_t w = u + 1; w < n; ++w) {
      const bool a_before = order_a.position_of(u) < order_a.position_of(w);
      const bool b_before = order_b.position_of(u) < order_b.position_of(w);
      if (a_before == b_before) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return static_cast<double>(concordant - discordant) / pairs;
}

EvalSummary evaluate(const ModelUnderEval& model, const data::Dataset& dataset) {
  EvalSummary summary;
  summary.model = model.name;
  summary.dataset_meta = dataset.meta;

  double hd_total = 0.0;
  double uw_total = 0.0;
  double kt_total = 0.0;
  std::size_t ef1_count = 0;
  for (std::size_t k = 0; k < dataset.samples.size(); ++k) {
    const auto& sample = dataset.samples[k];
    fair::IntegralAllocation pred = model.allocate(sample.profile);
    if (pred.agents() != dataset.meta.n || pred.goods() != dataset.meta.m) {
      throw std::runtime_error("evaluate: model output shape mismatch on sample " +
                               std::to_string(k));
    }
    const double hd = hamming_distance(sample.allocation, pred);
    const bool ef1 = fair::is_ef1(sample.profile, pred);
    const double uwl = uw_loss(sample.profile, pred);
    summary.hd.push_back(hd);
    summary.ef1.push_back(ef1);
    summary.uwloss.push_back(uwl);
    hd_total += hd;
    uw_total += uwl;
    ef1_count += ef1 ? 1 : 0;
    if (model.order) {
      const double kt =
          kendall_tau(model.order(sample.profile), mean_valuation_order(sample.profile));
      summary.kendall.push_back(kt);
      kt_total += kt;
    }
  }

  const double count = static_cast<double>(dataset.samples.size());
  summary.hd_mean = hd_total / count;
  summary.ef1_ratio = static_cast<double>(ef1_count) / count;
  summary.uwloss_mean = uw_total / count;
  if (!summary.kendall.empty()) summary.kendall_mean = kt_total / count;
  return summary;
}

void write_summary_csv(std::ostream& out, const std::vector<EvalSummary>& summaries) {
  out << "model,n,m,sample_index,hd,ef1,uwloss,kendall_tau\n";
  for (const auto& s : summaries) {
    const bool has_order = !s.kendall.empty();
    for (std::size_t k = 0; k < s.hd.size(); ++k) {
      out << s.model << ',' << s.dataset_meta.n << ',' << s.dataset_meta.m << ',' << k << ','
          << io::format_double(s.hd[k]) << ',' << (s.ef1[k] ? 1 : 0) << ','
          << io::format_double(s.uwloss[k]) << ',';
      if (has_order) out << io::format_double(s.kendall[k]);
      out << '\n';
    }
    out << s.model << ',' << s.dataset_meta.n << ',' << s.dataset_meta.m << ",mean,"
        << io::format_double(s.hd_mean) << ',' << io::format_double(s.ef1_ratio) << ','
        << io::format_double(s.uwloss_mean) << ',';
    if (has_order) out << io::format_double(s.kendall_mean);
    out << '\n';
  }
}

std::string summaries_to_csv(const std::vector<EvalSummary>& summaries) {
  std::ostringstream ss;
  write_summary_csv(ss, summaries);
  return ss.str();
}

}  // namespace nrr::eval
