#pragma once

#include <cstddef>
#include <vector>

#include "nrr/matrix.hpp"

namespace nrr::fair {

// Nonnegative n x m valuation matrix; agent i values bundle S at the sum of
// its entries over S.
class ValuationProfile {
 public:
  explicit ValuationProfile(Matrix values);

  std::size_t agents() const { return values_.rows(); }
  std::size_t goods() const { return values_.cols(); }
  double value(std::size_t agent, std::size_t good) const { return values_(agent, good); }
  const Matrix& matrix() const { return values_; }

 private:
  Matrix values_;
};

// Partition of the goods: every good belongs to exactly one agent.
class IntegralAllocation {
 public:
  IntegralAllocation(std::size_t agents, std::vector<std::size_t> owner_of_good);

  // Validates that the matrix is binary with every column summing to exactly 1.
  static IntegralAllocation from_matrix(const Matrix& a);

  std::size_t agents() const { return agents_; }
  std::size_t goods() const { return owner_.size(); }
  std::size_t owner(std::size_t good) const { return owner_[good]; }
  std::vector<std::size_t> bundle(std::size_t agent) const;
  Matrix to_matrix() const;

  bool operator==(const IntegralAllocation&) const = default;

 private:
  std::size_t agents_ = 0;
  std::vector<std::size_t> owner_;
};

// Bijection on agent indices. position_of maps agent -> position in the
// picking order; agent_at is its inverse. The matrix form P satisfies
// (P * V) row p == V row agent_at(p).
class AgentPermutation {
 public:
  static AgentPermutation identity(std::size_t n);
  // positions[i] = position of agent i.
  static AgentPermutation from_positions(std::vector<std::size_t> positions);
  // order[p] = agent placed at position p.
  static AgentPermutation from_order(std::vector<std::size_t> order);

  std::size_t size() const { return positions_.size(); }
  std::size_t position_of(std::size_t agent) const { return positions_[agent]; }
  std::size_t agent_at(std::size_t position) const { return order_[position]; }
  const std::vector<std::size_t>& order() const { return order_; }
  Matrix matrix_form() const;

  bool operator==(const AgentPermutation&) const = default;

 private:
  AgentPermutation() = default;
  std::vector<std::size_t> positions_;
  std::vector<std::size_t> order_;
};

double bundle_value(const ValuationProfile& profile, std::size_t agent,
                    const std::vector<std::size_t>& bundle);

// Picking rounds: agents take turns in index order choosing their
// highest-valued remaining good (ties to the earliest good) until all goods
// are gone. The output is always envy-free up to one good.
IntegralAllocation round_robin(const ValuationProfile& profile);

// round_robin on the row-permuted profile, with the result mapped back to the
// original agent indices.
IntegralAllocation round_robin_induced(const ValuationProfile& profile,
                                       const AgentPermutation& perm);

bool is_ef(const ValuationProfile& profile, const IntegralAllocation& alloc);

// Single-best-removal test: for additive valuations, dropping the envied
// bundle's good that i values most dominates any other removal.
bool is_ef1(const ValuationProfile& profile, const IntegralAllocation& alloc);

// Cross-check variant that tries every removal; kept for verification.
bool is_ef1_exhaustive(const ValuationProfile& profile, const IntegralAllocation& alloc);

double utilitarian_welfare(const ValuationProfile& profile, const IntegralAllocation& alloc);
// Fractional overload for evaluating soft allocations.
double utilitarian_welfare(const ValuationProfile& profile, const Matrix& fractional);

// Welfare-maximizing allocation; with additive valuations this is a per-good
// argmax over agents, ties to the earliest agent.
IntegralAllocation muw_allocation(const ValuationProfile& profile);

}  // namespace nrr::fair
