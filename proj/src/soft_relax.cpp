#include "nrr/soft_relax.hpp"

#include <stdexcept>
#include <vector>

namespace nrr::relax {

Matrix one_round(const fair::ValuationProfile& profile) {
  const std::size_t n = profile.agents();
  const std::size_t m = profile.goods();
  if (n > m) {
    throw std::invalid_argument("one_round: needs agents <= goods, got " +
                                profile.matrix().shape_string());
  }
  Matrix out(n, m, 0.0);
  std::vector<bool> taken(m, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = m;
    for (std::size_t j = 0; j < m; ++j) {
      if (taken[j]) continue;
      if (best == m || profile.value(i, j) > profile.value(i, best)) best = j;
    }
    out(i, best) = 1.0;
    taken[best] = true;
  }
  return out;
}

namespace {

// Rebuild an n x m tensor from its 1 x m row tensors using only transpose
// and horizontal concatenation.
ad::Tensor stack_rows(const std::vector<ad::Tensor>& rows) {
  ad::Tensor columns = ad::transpose(rows[0]);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    columns = ad::hconcat(columns, ad::transpose(rows[i]));
  }
  return ad::transpose(columns);
}

}  // namespace

ad::Tensor soft_round(const ad::Tensor& valuations, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("soft_round: temperature must be positive");
  const std::size_t n = valuations.rows();
  const std::size_t m = valuations.cols();
  const Matrix ones_row(1, m, 1.0);

  ad::Tensor mask = ad::Tensor::constant(ones_row);
  const ad::Tensor one = ad::Tensor::constant(ones_row);
  std::vector<ad::Tensor> picked_rows;
  picked_rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ad::Tensor row = ad::slice_rows(valuations, i, 1);
    // shift so remaining goods score >= 1 while taken goods stay near 0
    ad::Tensor shifted = ad::add_detached(ad::sub_broadcast(row, ad::row_min(row)), ones_row);
    ad::Tensor logits = ad::scale(ad::mul(shifted, mask), 1.0 / tau);
    ad::Tensor pick = ad::row_softmax(logits);
    mask = ad::mul(ad::sub(one, pick), mask);
    picked_rows.push_back(std::move(pick));
  }
  return stack_rows(picked_rows);
}

Matrix soft_round(const fair::ValuationProfile& profile, double tau) {
  return soft_round(ad::Tensor::constant(profile.matrix()), tau).value();
}

ad::Tensor soft_rr(const ad::Tensor& valuations, double tau) {
  const std::size_t n = valuations.rows();
  const std::size_t m = valuations.cols();
  const std::size_t k = (m + n - 1) / n;
  ad::Tensor stacked = ad::repeat_rows(valuations, k);
  ad::Tensor picks = soft_round(stacked, tau);
  ad::Tensor total = ad::slice_rows(picks, 0, n);
  for (std::size_t r = 1; r < k; ++r) {
    total = ad::add(total, ad::slice_rows(picks, r * n, n));
  }
  return total;
}

Matrix soft_rr(const fair::ValuationProfile& profile, double tau) {
  return soft_rr(ad::Tensor::constant(profile.matrix()), tau).value();
}

Matrix repeat_rows(const Matrix& m, std::size_t k) {
  if (k < 1) throw std::invalid_argument("repeat_rows: k must be >= 1");
  Matrix out(m.rows() * k, m.cols());
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) out(r * m.rows() + i, j) = m(i, j);
    }
  }
  return out;
}

}  // namespace nrr::relax
