#include "nrr/fairdiv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nrr::fair {

ValuationProfile::ValuationProfile(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw std::invalid_argument("ValuationProfile: need at least one agent and one good, got " +
                                values_.shape_string());
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0)) {
      throw std::invalid_argument("ValuationProfile: entries must be nonnegative finite reals");
    }
  }
}

IntegralAllocation::IntegralAllocation(std::size_t agents, std::vector<std::size_t> owner_of_good)
    : agents_(agents), owner_(std::move(owner_of_good)) {
  if (agents_ < 1) throw std::invalid_argument("IntegralAllocation: need at least one agent");
  for (std::size_t owner : owner_) {
    if (owner >= agents_) {
      throw std::invalid_argument("IntegralAllocation: owner index " + std::to_string(owner) +
                                  " out of range for " + std::to_string(agents_) + " agents");
    }
  }
}

IntegralAllocation IntegralAllocation::from_matrix(const Matrix& a) {
  if (a.rows() < 1 || a.cols() < 1) {
    throw std::invalid_argument("IntegralAllocation: empty matrix");
  }
  std::vector<std::size_t> owner(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const double v = a(i, j);
      if (v == 1.0) {
        owner[j] = i;
        ++ones;
      } else if (v != 0.0) {
        throw std::invalid_argument("IntegralAllocation: non-binary entry at column " +
                                    std::to_string(j));
      }
    }
    if (ones != 1) {
      throw std::invalid_argument("IntegralAllocation: column " + std::to_string(j) +
                                  " must contain exactly one 1, has " + std::to_string(ones));
    }
  }
  return IntegralAllocation(a.rows(), std::move(owner));
}

std::vector<std::size_t> IntegralAllocation::bundle(std::size_t agent) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < owner_.size(); ++j) {
    if (owner_[j] == agent) out.push_back(j);
  }
  return out;
}

Matrix IntegralAllocation::to_matrix() const {
  Matrix a(agents_, owner_.size(), 0.0);
  for (std::size_t j = 0; j < owner_.size(); ++j) a(owner_[j], j) = 1.0;
  return a;
}

AgentPermutation AgentPermutation::identity(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  AgentPermutation p;
  p.positions_ = idx;
  p.order_ = std::move(idx);
  return p;
}

namespace {

void check_bijection(const std::vector<std::size_t>& v) {
  std::vector<bool> seen(v.size(), false);
  for (std::size_t x : v) {
    if (x >= v.size() || seen[x]) {
      throw std::invalid_argument("AgentPermutation: not a bijection on agent indices");
    }
    seen[x] = true;
  }
}

}  // namespace

AgentPermutation AgentPermutation::from_positions(std::vector<std::size_t> positions) {
  check_bijection(positions);
  AgentPermutation p;
  p.order_.resize(positions.size());
  for (std::size_t agent = 0; agent < positions.size(); ++agent) {
    p.order_[positions[agent]] = agent;
  }
  p.positions_ = std::move(positions);
  return p;
}

AgentPermutation AgentPermutation::from_order(std::vector<std::size_t> order) {
  check_bijection(order);
  AgentPermutation p;
  p.positions_.resize(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    p.positions_[order[pos]] = pos;
  }
  p.order_ = std::move(order);
  return p;
}

Matrix AgentPermutation::matrix_form() const {
  Matrix m(size(), size(), 0.0);
  for (std::size_t pos = 0; pos < size(); ++pos) m(pos, order_[pos]) = 1.0;
  return m;
}

double bundle_value(const ValuationProfile& profile, std::size_t agent,
                    const std::vector<std::size_t>& bundle) {
  if (agent >= profile.agents()) {
    throw std::invalid_argument("bundle_value: agent index out of range");
  }
  double total = 0.0;
  for (std::size_t good : bundle) {
    if (good >= profile.goods()) {
      throw std::invalid_argument("bundle_value: good index out of range");
    }
    total += profile.value(agent, good);
  }
  return total;
}

namespace {

// One full run of picking turns over positions given by `order`.
IntegralAllocation run_picking(const ValuationProfile& profile,
                               const std::vector<std::size_t>& order) {
  const std::size_t n = profile.agents();
  const std::size_t m = profile.goods();
  const std::size_t rounds = (m + n - 1) / n;
  std::vector<bool> taken(m, false);
  std::size_t remaining = m;
  std::vector<std::size_t> owner(m, 0);
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t pos = 0; pos < n; ++pos) {
      if (remaining == 0) continue;  // turn is skipped once nothing is left
      const std::size_t agent = order[pos];
      std::size_t best = m;
      for (std::size_t j = 0; j < m; ++j) {
        if (taken[j]) continue;
        if (best == m || profile.value(agent, j) > profile.value(agent, best)) {
          best = j;  // strict improvement keeps the earliest good on ties
        }
      }
      taken[best] = true;
      owner[best] = agent;
      --remaining;
    }
  }
  return IntegralAllocation(n, std::move(owner));
}

}  // namespace

IntegralAllocation round_robin(const ValuationProfile& profile) {
  return run_picking(profile, AgentPermutation::identity(profile.agents()).order());
}

IntegralAllocation round_robin_induced(const ValuationProfile& profile,
                                       const AgentPermutation& perm) {
  if (perm.size() != profile.agents()) {
    throw std::invalid_argument("round_robin_induced: permutation length " +
                                std::to_string(perm.size()) + " does not match agent count " +
                                std::to_string(profile.agents()));
  }
  return run_picking(profile, perm.order());
}

namespace {

void check_shapes(const ValuationProfile& profile, const IntegralAllocation& alloc,
                  const char* op) {
  if (profile.agents() != alloc.agents() || profile.goods() != alloc.goods()) {
    throw std::invalid_argument(std::string(op) + ": profile is " +
                                profile.matrix().shape_string() + " but allocation is " +
                                std::to_string(alloc.agents()) + "x" +
                                std::to_string(alloc.goods()));
  }
}

}  // namespace

bool is_ef(const ValuationProfile& profile, const IntegralAllocation& alloc) {
  check_shapes(profile, alloc, "is_ef");
  const std::size_t n = profile.agents();
  const std::size_t m = profile.goods();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> bundle_values(n, 0.0);
    for (std::size_t j = 0; j < m; ++j) bundle_values[alloc.owner(j)] += profile.value(i, j);
    for (std::size_t other = 0; other < n; ++other) {
      if (bundle_values[i] < bundle_values[other]) return false;
    }
  }
  return true;
}

bool is_ef1(const ValuationProfile& profile, const IntegralAllocation& alloc) {
  check_shapes(profile, alloc, "is_ef1");
  const std::size_t n = profile.agents();
  const std::size_t m = profile.goods();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> bundle_values(n, 0.0);
    std::vector<double> best_removal(n, 0.0);  // i's top-valued good in each bundle
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t owner = alloc.owner(j);
      const double v = profile.value(i, j);
      bundle_values[owner] += v;
      best_removal[owner] = std::max(best_removal[owner], v);
    }
    for (std::size_t other = 0; other < n; ++other) {
      if (other == i) continue;
      if (bundle_values[i] < bundle_values[other] - best_removal[other]) return false;
    }
  }
  return true;
}

bool is_ef1_exhaustive(const ValuationProfile& profile, const IntegralAllocation& alloc) {
  check_shapes(profile, alloc, "is_ef1_exhaustive");
  const std::size_t n = profile.agents();
  for (std::size_t i = 0; i < n; ++i) {
    const double own = bundle_value(profile, i, alloc.bundle(i));
    for (std::size_t other = 0; other < n; ++other) {
      if (other == i) continue;
      const auto goods = alloc.bundle(other);
      const double theirs = bundle_value(profile, i, goods);
      if (own >= theirs) continue;
      bool fixable = false;
      for (std::size_t dropped : goods) {
        if (own >= theirs - profile.value(i, dropped)) {
          fixable = true;
          break;
        }
      }
      if (!fixable) return false;
    }
  }
  return true;
}

double utilitarian_welfare(const ValuationProfile& profile, const IntegralAllocation& alloc) {
  check_shapes(profile, alloc, "utilitarian_welfare");
  double total = 0.0;
  for (std::size_t j = 0; j < profile.goods(); ++j) total += profile.value(alloc.owner(j), j);
  return total;
}

double utilitarian_welfare(const ValuationProfile& profile, const Matrix& fractional) {
  if (profile.agents() != fractional.rows() || profile.goods() != fractional.cols()) {
    throw std::invalid_argument("utilitarian_welfare: profile is " +
                                profile.matrix().shape_string() + " but allocation is " +
                                fractional.shape_string());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < fractional.rows(); ++i) {
    for (std::size_t j = 0; j < fractional.cols(); ++j) {
      total += fractional(i, j) * profile.value(i, j);
    }
  }
  return total;
}

IntegralAllocation muw_allocation(const ValuationProfile& profile) {
  const std::size_t n = profile.agents();
  const std::size_t m = profile.goods();
  std::vector<std::size_t> owner(m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (profile.value(i, j) > profile.value(best, j)) best = i;
    }
    owner[j] = best;
  }
  return IntegralAllocation(n, std::move(owner));
}

}  // namespace nrr::fair
