#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "nrr/eval_metrics.hpp"
#include "nrr/nrr_model.hpp"
#include "nrr/rng.hpp"
#include "nrr/soft_relax.hpp"

using namespace nrr;
using fair::AgentPermutation;
using fair::ValuationProfile;

namespace {

ValuationProfile worked_example() {
  return ValuationProfile(Matrix::from_rows({
      {1.0, 0.0, 3.0, 2.0},
      {3.0, 2.0, 1.0, 0.0},
      {4.0, 3.0, 2.0, 1.0},
  }));
}

Matrix random_matrix(RngStream& rng, std::size_t rows, std::size_t cols, double lo = 0.0,
                     double hi = 1.0) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.next_uniform(lo, hi);
  return m;
}

// Test-side eigendecomposition of a symmetric matrix, independent of the
// library path (it factors V^T V, the library factors V V^T). Plain cyclic
// Givens rotations.
void oracle_eigen_sym(Matrix a, std::vector<double>& values, Matrix& vectors) {
  const std::size_t n = a.rows();
  vectors = Matrix::identity(n);
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double phi = 0.5 * std::atan2(2.0 * a(p, q), a(q, q) - a(p, p));
        const double c = std::cos(phi);
        const double s = std::sin(phi);
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors(k, p);
          const double vkq = vectors(k, q);
          vectors(k, p) = c * vkp - s * vkq;
          vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
}

// Best rank-r approximation of v from the right singular subspace.
Matrix oracle_rank_r_approximation(const Matrix& v, std::size_t r) {
  std::vector<double> values;
  Matrix vectors;
  oracle_eigen_sym(la::matmul(la::transpose(v), v), values, vectors);
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&values](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  Matrix w(v.cols(), r);
  for (std::size_t c = 0; c < r; ++c) {
    for (std::size_t i = 0; i < v.cols(); ++i) w(i, c) = vectors(i, idx[c]);
  }
  return la::matmul(v, la::matmul(w, la::transpose(w)));
}

// A single linear layer whose weights pick out one feature column.
model::NrrParamTensors feature_picker(std::size_t feature_width, std::size_t picked,
                                      double coefficient, double tau, double tau_prime,
                                      std::size_t rank) {
  Matrix w(feature_width, 1, 0.0);
  w(picked, 0) = coefficient;
  model::NrrParamTensors tensors;
  tensors.rank = rank;
  tensors.tau = tau;
  tensors.tau_prime = tau_prime;
  tensors.layers.emplace_back(ad::Tensor::parameter(w), ad::Tensor::parameter(Matrix(1, 1, 0.0)));
  return tensors;
}

}  // namespace

TEST_CASE("identity valuations give a canonical first embedding column") {
  const ValuationProfile v(Matrix::identity(3));
  const Matrix e = model::svd_embeddings(v, 1);
  CHECK(e.rows() == 3);
  CHECK(e.cols() == 1);
  CHECK(std::fabs(e(0, 0)) == doctest::Approx(1.0));
  CHECK(e(1, 0) == doctest::Approx(0.0));
  CHECK(e(2, 0) == doctest::Approx(0.0));
}

TEST_CASE("a rank-one profile embeds proportionally to its agent factor") {
  const std::vector<double> u = {1.0, 2.0, 2.0};
  const std::vector<double> w = {3.0, 0.0, 4.0};  // norm 5
  Matrix v(3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) v(i, j) = u[i] * w[j];
  }
  const Matrix e = model::svd_embeddings(ValuationProfile(v), 1);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(e(i, 0) == doctest::Approx(u[i] * 5.0).epsilon(1e-9));
  }
}

TEST_CASE("truncated factorization matches the dense rank-r oracle") {
  RngStream rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix v = random_matrix(rng, 5, 8);
    const model::TruncatedSvd svd = model::svd_top(v, 3);
    // U_r Sigma_r V_r^T equals the projection of v onto the left subspace
    const Matrix projected =
        la::matmul(svd.left_vectors, la::matmul(la::transpose(svd.left_vectors), v));
    CHECK(la::max_abs_diff(projected, oracle_rank_r_approximation(v, 3)) < 1e-6);
  }
}

TEST_CASE("embedding rank bounds are enforced") {
  const ValuationProfile v = worked_example();
  CHECK_THROWS_AS(model::svd_embeddings(v, 0), std::invalid_argument);
  CHECK_THROWS_AS(model::svd_embeddings(v, 4), std::invalid_argument);
}

TEST_CASE("agent features append row extremes to the embeddings") {
  const Matrix f = model::agent_features(worked_example(), 1);
  CHECK(f.cols() == 3);
  CHECK(f(0, 1) == 0.0);
  CHECK(f(1, 1) == 0.0);
  CHECK(f(2, 1) == 1.0);
  CHECK(f(0, 2) == 3.0);
  CHECK(f(1, 2) == 3.0);
  CHECK(f(2, 2) == 4.0);

  const ValuationProfile flat(Matrix(4, 5, 0.7));
  const Matrix g = model::agent_features(flat, 2);
  CHECK(g.cols() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(g(i, 2) == 0.7);
    CHECK(g(i, 3) == 0.7);
  }
}

TEST_CASE("zeroed scorer weights give zero scores") {
  model::NrrParams params = model::NrrParams::init(2, 1.0, 1.0, 9);
  for (auto& layer : params.layers) {
    layer.weight = Matrix(layer.weight.rows(), layer.weight.cols(), 0.0);
    layer.bias = Matrix(1, layer.bias.cols(), 0.0);
  }
  const Matrix f = model::agent_features(worked_example(), 2);
  const ad::Tensor scores = model::score_agents(f, model::make_trainable(params));
  for (std::size_t i = 0; i < scores.rows(); ++i) CHECK(scores.value()(i, 0) == 0.0);
}

TEST_CASE("a linear layer can read a single feature") {
  const Matrix f = model::agent_features(worked_example(), 1);
  const auto picker = feature_picker(3, 2, 1.0, 1.0, 1.0, 1);  // the row-max column
  const ad::Tensor scores = model::score_agents(f, picker);
  CHECK(scores.value()(0, 0) == 3.0);
  CHECK(scores.value()(1, 0) == 3.0);
  CHECK(scores.value()(2, 0) == 4.0);
}

TEST_CASE("score width mismatches are rejected") {
  const Matrix f = model::agent_features(worked_example(), 2);  // width 4
  model::NrrParams params = model::NrrParams::init(3, 1.0, 1.0, 9);  // expects width 5
  CHECK_THROWS_AS(model::score_agents(f, model::make_trainable(params)),
                  std::invalid_argument);
}

TEST_CASE("scorer gradients match finite differences") {
  RngStream rng(77);
  const ValuationProfile v(random_matrix(rng, 4, 6));
  const Matrix f = model::agent_features(v, 3);
  model::NrrParamTensors tensors =
      model::make_trainable(model::NrrParams::init(3, 1.0, 1.0, 1234));
  auto rebuild = [&]() { return ad::sum(model::score_agents(f, tensors)); };
  CHECK(ad::finite_difference_check(rebuild, model::parameter_list(tensors), 1e-5) < 1e-4);
}

TEST_CASE("rank counts smaller entries with index tie-breaks") {
  CHECK(model::rank_vector({2.0, 1.0, 2.0}) == std::vector<std::size_t>{1, 0, 2});
  CHECK(model::rank_vector({0.5, 1.0, 7.0}) == std::vector<std::size_t>{0, 1, 2});
  CHECK(model::rank_vector({3.0, 3.0, 3.0, 3.0}) == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("tie-broken scores are distinct and order-preserving") {
  auto a = ad::Tensor::parameter(Matrix::from_rows({{2.0}, {1.0}, {2.0}}));
  const ad::Tensor t = model::tie_break(a);
  CHECK(t.value()(0, 0) == 3.0);
  CHECK(t.value()(1, 0) == 1.0);
  CHECK(t.value()(2, 0) == 4.0);
  ad::backward(ad::sum(t));
  CHECK(a.grad() == Matrix(3, 1, 1.0));

  RngStream rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> raw(6);
    for (double& x : raw) x = rng.next_below(4) * 0.25;  // plenty of collisions
    const std::vector<double> t2 = model::tie_break_values(raw);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      for (std::size_t j = i + 1; j < raw.size(); ++j) {
        CHECK(t2[i] != t2[j]);
        if (raw[i] < raw[j]) CHECK(t2[i] < t2[j]);
        if (raw[i] > raw[j]) CHECK(t2[i] > t2[j]);
      }
    }
  }
}

TEST_CASE("soft sort approaches the hard descending permutation") {
  auto ascending = ad::Tensor::constant(Matrix::from_rows({{0.0}, {1.0}}));
  const Matrix p1 = model::soft_sort(ascending, 1e-3).value();
  CHECK(la::max_abs_diff(p1, Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}})) < 1e-3);

  auto descending = ad::Tensor::constant(Matrix::from_rows({{1.0}, {0.0}}));
  const Matrix p2 = model::soft_sort(descending, 1e-3).value();
  CHECK(la::max_abs_diff(p2, Matrix::identity(2)) < 1e-3);
}

TEST_CASE("soft sort rows always sum to one") {
  RngStream rng(6);
  for (double tau_prime : {10.0, 1.0, 0.01}) {
    auto a = ad::Tensor::constant(random_matrix(rng, 5, 1, -2.0, 2.0));
    const Matrix p = model::soft_sort(a, tau_prime).value();
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) total += p(i, j);
      CHECK(std::fabs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("hard order sorts tie-broken scores descending") {
  CHECK(model::hard_order({0.0, 1.0}) == AgentPermutation::from_order({1, 0}));
  CHECK(model::hard_order({2.0, 1.0, 2.0}) == AgentPermutation::from_order({2, 0, 1}));
  // equal scores: the rank addend grows with the index, so later agents lead
  CHECK(model::hard_order({0.5, 0.5, 0.5}) == AgentPermutation::from_order({2, 1, 0}));
  // the largest score always lands at the first position
  RngStream rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> scores(5);
    for (double& s : scores) s = rng.next_uniform(-1.0, 1.0);
    const AgentPermutation order = model::hard_order(scores);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      if (scores[i] > scores[best]) best = i;
    }
    CHECK(order.agent_at(0) == best);
  }
}

TEST_CASE("training forward output lives on the column simplex") {
  RngStream rng(9);
  const ValuationProfile v(random_matrix(rng, 4, 8));
  model::NrrParamTensors tensors =
      model::make_trainable(model::NrrParams::init(3, 1.0, 1.0, 99));
  const Matrix out = model::nrr_forward_train(v, tensors).value();
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 8);
  for (std::size_t j = 0; j < out.cols(); ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      total += out(i, j);
      CHECK(out(i, j) >= 0.0);
    }
    CHECK(std::fabs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("a single agent absorbs every good after normalization") {
  const ValuationProfile v(Matrix::from_rows({{0.4, 0.9, 0.1}}));
  for (double tau : {1.0, 0.01}) {
    model::NrrParamTensors tensors =
        model::make_trainable(model::NrrParams::init(1, tau, tau, 5));
    const Matrix out = model::nrr_forward_train(v, tensors).value();
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(out(0, j) - 1.0) < 1e-9);
  }
}

TEST_CASE("cold training forward agrees with the hard path") {
  // The sharp-temperature limit needs non-degenerate decisions, so instances
  // are filtered for both sorting margins and picking margins before the
  // strict comparison.
  RngStream rng(10);
  int checked = 0;
  int attempts = 0;
  while (checked < 5 && ++attempts < 2000) {
    Matrix raw = random_matrix(rng, 4, 8);
    const ValuationProfile v(raw);
    model::NrrParams params = model::NrrParams::init(3, 1e-3, 1e-3, rng.next_u64());
    const Matrix f = model::agent_features(v, 3);
    const ad::Tensor s = model::score_agents(f, model::make_trainable(params));
    std::vector<double> scores(s.rows());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = s.value()(i, 0);
    const std::vector<double> t = model::tie_break_values(scores);
    double score_gap = 1e300;
    for (std::size_t i = 0; i < t.size(); ++i) {
      for (std::size_t j = i + 1; j < t.size(); ++j) {
        score_gap = std::min(score_gap, std::fabs(t[i] - t[j]));
      }
    }
    if (score_gap < 0.2) continue;

    const fair::AgentPermutation order = model::hard_order(scores);
    const Matrix permuted = la::matmul(order.matrix_form(), v.matrix());
    std::vector<bool> taken(8, false);
    double pick_gap = 1e300;
    for (std::size_t row = 0; row < 8; ++row) {  // two stacked rounds of 4
      const std::size_t agent_row = row % 4;
      std::size_t best = 8;
      std::size_t second = 8;
      for (std::size_t j = 0; j < 8; ++j) {
        if (taken[j]) continue;
        if (best == 8 || permuted(agent_row, j) > permuted(agent_row, best)) {
          second = best;
          best = j;
        } else if (second == 8 || permuted(agent_row, j) > permuted(agent_row, second)) {
          second = j;
        }
      }
      if (second != 8) {
        pick_gap = std::min(pick_gap, permuted(agent_row, best) - permuted(agent_row, second));
      }
      taken[best] = true;
    }
    if (pick_gap < 0.01) continue;

    const Matrix soft = model::nrr_forward_train(v, f, model::make_trainable(params)).value();
    const Matrix hard = fair::round_robin_induced(v, order).to_matrix();
    CHECK(la::max_abs_diff(soft, hard) < 1e-2);
    ++checked;
  }
  CHECK(checked == 5);
}

TEST_CASE("inference reproduces the permuted worked example from mean-like scores") {
  // (min + max) / 2 equals the row mean on this profile
  Matrix w(3, 1, 0.0);
  w(1, 0) = 0.5;
  w(2, 0) = 0.5;
  model::NrrParams params;
  params.rank = 1;
  params.tau = 1.0;
  params.tau_prime = 1.0;
  params.layers.push_back(model::MlpLayer{w, Matrix(1, 1, 0.0)});

  const fair::IntegralAllocation a = model::nrr_infer(worked_example(), params);
  CHECK(a.bundle(0) == std::vector<std::size_t>{2});
  CHECK(a.bundle(1) == std::vector<std::size_t>{1});
  CHECK(a.bundle(2) == std::vector<std::size_t>{0, 3});
}

TEST_CASE("inference is envy-free up to one good for arbitrary weights") {
  RngStream rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.next_below(7);
    const std::size_t m = 1 + rng.next_below(16);
    const ValuationProfile v(random_matrix(rng, n, m));
    const std::size_t rank = std::min<std::size_t>(3, std::min(n, m));
    model::NrrParams params = model::NrrParams::init(rank, 0.1, 0.1, rng.next_u64());
    CHECK(fair::is_ef1(v, model::nrr_infer(v, params)));
  }
}

TEST_CASE("a single agent is handed everything at inference") {
  const ValuationProfile v(Matrix::from_rows({{0.2, 0.8}}));
  model::NrrParams params = model::NrrParams::init(1, 1.0, 1.0, 3);
  CHECK(model::nrr_infer(v, params).bundle(0).size() == 2);
}

namespace {

double soft_hard_agreement(const ValuationProfile& profile, const model::NrrParams& params) {
  const Matrix f = model::agent_features(profile, params.rank);
  const Matrix soft = model::nrr_forward_train(profile, f, model::make_trainable(params)).value();
  const fair::IntegralAllocation hard = model::nrr_infer(profile, f, params);
  std::size_t matches = 0;
  for (std::size_t j = 0; j < profile.goods(); ++j) {
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < profile.agents(); ++i) {
      if (soft(i, j) > soft(argmax, j)) argmax = i;
    }
    matches += argmax == hard.owner(j) ? 1 : 0;
  }
  return static_cast<double>(matches) / static_cast<double>(profile.goods());
}

}  // namespace

TEST_CASE("soft and hard paths agree on most goods at sharp temperatures") {
  // The finite-temperature agreement rate requires picking margins to
  // dominate the temperature, so the profiles are drawn with margins of at
  // least 0.05 against a temperature of 1e-3 (the same proviso as the
  // convergence checks).
  RngStream rng(12);
  double agreement = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    ValuationProfile profile = [&] {
      while (true) {
        Matrix v(4, 8);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.next_unit();
        std::vector<bool> taken(8, false);
        double gap = 1e300;
        for (std::size_t row = 0; row < 8; ++row) {
          std::size_t best = 8, second = 8;
          for (std::size_t j = 0; j < 8; ++j) {
            if (taken[j]) continue;
            if (best == 8 || v(row % 4, j) > v(row % 4, best)) {
              second = best;
              best = j;
            } else if (second == 8 || v(row % 4, j) > v(row % 4, second)) {
              second = j;
            }
          }
          if (second != 8) gap = std::min(gap, v(row % 4, best) - v(row % 4, second));
          taken[best] = true;
        }
        if (gap >= 0.05) return ValuationProfile(std::move(v));
      }
    }();
    model::NrrParams params = model::NrrParams::init(3, 1e-3, 1e-3, rng.next_u64());
    agreement += soft_hard_agreement(profile, params);
  }
  CHECK(agreement / 100.0 >= 0.95);
}

TEST_CASE("soft and hard paths agree on low-rank data when the noise dominates the temperature") {
  // The low-rank model's within-row margins come from the U[0,0.01] noise, so
  // the sharp regime needs either few goods per row or a temperature well
  // below the noise spacing.
  RngStream rng(15);
  double two_by_two = 0.0;
  double cooled = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    Matrix v(2, 2);
    for (std::size_t i = 0; i < 2; ++i) {
      const double mu = rng.next_uniform(1.0, 2.0);
      for (std::size_t j = 0; j < 2; ++j) v(i, j) = mu + rng.next_uniform(0.0, 0.01);
    }
    two_by_two += soft_hard_agreement(ValuationProfile(v),
                                      model::NrrParams::init(2, 1e-3, 1e-3, rng.next_u64()));

    Matrix w(4, 8);
    for (std::size_t i = 0; i < 4; ++i) {
      const double mu = rng.next_uniform(1.0, 2.0);
      for (std::size_t j = 0; j < 8; ++j) w(i, j) = mu + rng.next_uniform(0.0, 0.01);
    }
    cooled += soft_hard_agreement(ValuationProfile(w),
                                  model::NrrParams::init(3, 1e-6, 1e-6, rng.next_u64()));
  }
  CHECK(two_by_two / 100.0 >= 0.95);
  CHECK(cooled / 100.0 >= 0.95);
}

TEST_CASE("end-to-end training gradients match finite differences") {
  RngStream rng(13);
  const ValuationProfile v(random_matrix(rng, 4, 8));
  const fair::IntegralAllocation target = fair::muw_allocation(v);
  const Matrix f = model::agent_features(v, 3);
  model::NrrParamTensors tensors =
      model::make_trainable(model::NrrParams::init(3, 1.0, 1.0, 2024));
  auto rebuild = [&]() {
    const ad::Tensor pred = model::nrr_forward_train(v, f, tensors);
    const ad::Tensor mask = ad::Tensor::constant(target.to_matrix());
    return ad::scale(ad::sum(ad::mul(mask, ad::log_clamped(pred))), -1.0 / 8.0);
  };
  CHECK(ad::finite_difference_check(rebuild, model::parameter_list(tensors), 1e-5) < 1e-4);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  model::NrrParams params = model::NrrParams::init(3, 0.1, 0.01, 0xDEADBEEFull);
  const std::string text = model::checkpoint_to_json(params);
  const model::NrrParams loaded = model::checkpoint_from_json(text);
  CHECK(loaded.rank == params.rank);
  CHECK(loaded.tau == params.tau);
  CHECK(loaded.tau_prime == params.tau_prime);
  CHECK(loaded.init_seed == params.init_seed);
  REQUIRE(loaded.layers.size() == params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    CHECK(loaded.layers[l].weight == params.layers[l].weight);
    CHECK(loaded.layers[l].bias == params.layers[l].bias);
  }

  RngStream rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    const ValuationProfile v(random_matrix(rng, 5, 7));
    CHECK(model::nrr_infer(v, params) == model::nrr_infer(v, loaded));
  }
}

TEST_CASE("malformed checkpoints are rejected") {
  CHECK_THROWS(model::checkpoint_from_json("{}"));
  model::NrrParams params = model::NrrParams::init(2, 1.0, 1.0, 7);
  std::string text = model::checkpoint_to_json(params);
  const auto pos = text.find("nrr-checkpoint");
  text.replace(pos, 3, "xxx");
  CHECK_THROWS(model::checkpoint_from_json(text));
}
