#include "nrr/nrr_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "nrr/io_util.hpp"
#include "nrr/rng.hpp"
#include "nrr/soft_relax.hpp"

namespace nrr::model {

namespace {

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // columns matching values
};

// Cyclic Jacobi sweeps on a symmetric matrix. Converges for any symmetric
// input, including clustered or repeated eigenvalues.
SymmetricEigen jacobi_eigen(Matrix a, std::size_t max_sweeps) {
  const std::size_t n = a.rows();
  Matrix vectors = Matrix::identity(n);

  double diag_scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) diag_scale = std::max(diag_scale, std::fabs(a(i, i)));
  const double tol = 1e-12 * diag_scale;

  std::size_t sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::fabs(a(p, q)));
    }
    if (off <= tol) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) <= tol) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = theta >= 0.0 ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                                      : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
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
  if (sweep == max_sweeps) {
    throw std::runtime_error("jacobi_eigen: no convergence within the sweep cap of " +
                             std::to_string(max_sweeps));
  }

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&a](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(idx[c], idx[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = vectors(r, idx[c]);
  }
  return out;
}

constexpr std::size_t kJacobiSweepCap = 500;

}  // namespace

NrrParams NrrParams::init(std::size_t rank, double tau, double tau_prime, std::uint64_t seed) {
  if (rank < 1) throw std::invalid_argument("NrrParams::init: rank must be >= 1");
  if (tau <= 0.0 || tau_prime <= 0.0) {
    throw std::invalid_argument("NrrParams::init: temperatures must be positive");
  }
  NrrParams params;
  params.rank = rank;
  params.tau = tau;
  params.tau_prime = tau_prime;
  params.init_seed = seed;

  const std::vector<std::size_t> widths = {rank + 2, kMlpHiddenWidth, kMlpHiddenWidth, 1};
  RngStream rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    MlpLayer layer{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
      layer.weight[i] = rng.next_uniform(-bound, bound);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = rng.next_uniform(-bound, bound);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

NrrParamTensors make_trainable(const NrrParams& params) {
  NrrParamTensors tensors;
  tensors.rank = params.rank;
  tensors.tau = params.tau;
  tensors.tau_prime = params.tau_prime;
  for (const auto& layer : params.layers) {
    tensors.layers.emplace_back(ad::Tensor::parameter(layer.weight),
                                ad::Tensor::parameter(layer.bias));
  }
  return tensors;
}

NrrParams snapshot(const NrrParamTensors& tensors, std::uint64_t init_seed) {
  NrrParams params;
  params.rank = tensors.rank;
  params.tau = tensors.tau;
  params.tau_prime = tensors.tau_prime;
  params.init_seed = init_seed;
  for (const auto& [w, b] : tensors.layers) {
    params.layers.push_back(MlpLayer{w.value(), b.value()});
  }
  return params;
}

std::vector<ad::Tensor> parameter_list(const NrrParamTensors& tensors) {
  std::vector<ad::Tensor> out;
  for (const auto& [w, b] : tensors.layers) {
    out.push_back(w);
    out.push_back(b);
  }
  return out;
}

TruncatedSvd svd_top(const Matrix& v, std::size_t r) {
  const std::size_t n = v.rows();
  const std::size_t m = v.cols();
  if (r < 1 || r > std::min(n, m)) {
    throw std::invalid_argument("svd_top: rank " + std::to_string(r) +
                                " out of range for a " + v.shape_string() + " matrix");
  }
  const Matrix gram = la::matmul(v, la::transpose(v));
  SymmetricEigen eig = jacobi_eigen(gram, kJacobiSweepCap);

  TruncatedSvd out;
  out.left_vectors = Matrix(n, r);
  out.singular_values.resize(r);
  for (std::size_t c = 0; c < r; ++c) {
    out.singular_values[c] = std::sqrt(std::max(eig.values[c], 0.0));
    // orient: largest-magnitude entry nonnegative, earliest on ties
    std::size_t lead = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (std::fabs(eig.vectors(i, c)) > std::fabs(eig.vectors(lead, c))) lead = i;
    }
    const double flip = eig.vectors(lead, c) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) out.left_vectors(i, c) = flip * eig.vectors(i, c);
  }
  return out;
}

Matrix svd_embeddings(const fair::ValuationProfile& profile, std::size_t r) {
  TruncatedSvd svd = svd_top(profile.matrix(), r);
  Matrix out(profile.agents(), r);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t c = 0; c < r; ++c) {
      out(i, c) = svd.left_vectors(i, c) * svd.singular_values[c];
    }
  }
  return out;
}

Matrix agent_features(const fair::ValuationProfile& profile, std::size_t r) {
  const Matrix embeddings = svd_embeddings(profile, r);
  const std::size_t n = profile.agents();
  const std::size_t m = profile.goods();
  Matrix out(n, r + 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < r; ++c) out(i, c) = embeddings(i, c);
    double lo = profile.value(i, 0);
    double hi = profile.value(i, 0);
    for (std::size_t j = 1; j < m; ++j) {
      lo = std::min(lo, profile.value(i, j));
      hi = std::max(hi, profile.value(i, j));
    }
    out(i, r) = lo;
    out(i, r + 1) = hi;
  }
  return out;
}

namespace {

ad::Tensor mlp_forward(const ad::Tensor& input, const NrrParamTensors& params) {
  ad::Tensor h = input;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& [w, b] = params.layers[l];
    h = ad::add_broadcast(ad::matmul(h, w), b);
    if (l + 1 < params.layers.size()) h = ad::tanh(h);
  }
  return h;
}

NrrParamTensors as_constants(const NrrParams& params) {
  NrrParamTensors tensors;
  tensors.rank = params.rank;
  tensors.tau = params.tau;
  tensors.tau_prime = params.tau_prime;
  for (const auto& layer : params.layers) {
    tensors.layers.emplace_back(ad::Tensor::constant(layer.weight),
                                ad::Tensor::constant(layer.bias));
  }
  return tensors;
}

std::vector<double> column_to_vector(const Matrix& column) {
  std::vector<double> out(column.rows());
  for (std::size_t i = 0; i < column.rows(); ++i) out[i] = column(i, 0);
  return out;
}

}  // namespace

ad::Tensor score_agents(const Matrix& features, const NrrParamTensors& params) {
  if (params.layers.empty()) throw std::invalid_argument("score_agents: no layers");
  if (features.cols() != params.layers.front().first.rows()) {
    throw std::invalid_argument("score_agents: feature width " +
                                std::to_string(features.cols()) + " does not match layer input " +
                                std::to_string(params.layers.front().first.rows()));
  }
  return mlp_forward(ad::Tensor::constant(features), params);
}

std::vector<std::size_t> rank_vector(const std::vector<double>& a) {
  const std::size_t n = a.size();
  std::vector<std::size_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (a[j] < a[i] || (a[j] == a[i] && j < i)) ++count;
    }
    out[i] = count;
  }
  return out;
}

ad::Tensor tie_break(const ad::Tensor& a) {
  if (a.cols() != 1) {
    throw std::invalid_argument("tie_break: expected an n x 1 score column, got " +
                                a.value().shape_string());
  }
  const std::vector<std::size_t> ranks = rank_vector(column_to_vector(a.value()));
  Matrix addend(a.rows(), 1);
  for (std::size_t i = 0; i < ranks.size(); ++i) addend(i, 0) = static_cast<double>(ranks[i]);
  return ad::add_detached(a, addend);
}

std::vector<double> tie_break_values(const std::vector<double>& a) {
  const std::vector<std::size_t> ranks = rank_vector(a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + static_cast<double>(ranks[i]);
  return out;
}

namespace {

std::vector<std::size_t> descending_argsort(const std::vector<double>& values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&values](std::size_t x, std::size_t y) { return values[x] > values[y]; });
  return idx;
}

}  // namespace

ad::Tensor soft_sort(const ad::Tensor& a, double tau_prime) {
  if (tau_prime <= 0.0) throw std::invalid_argument("soft_sort: temperature must be positive");
  if (a.cols() != 1) {
    throw std::invalid_argument("soft_sort: expected an n x 1 score column, got " +
                                a.value().shape_string());
  }
  const std::size_t n = a.rows();
  const std::vector<std::size_t> order = descending_argsort(column_to_vector(a.value()));

  // sort(a) expressed as a constant permutation gather, so the gradient flows
  // through the matmul back into a.
  Matrix sorter(n, n, 0.0);
  for (std::size_t p = 0; p < n; ++p) sorter(p, order[p]) = 1.0;
  ad::Tensor sorted = ad::matmul(ad::Tensor::constant(sorter), a);  // n x 1

  ad::Tensor by_position = ad::matmul(sorted, ad::Tensor::constant(Matrix(1, n, 1.0)));
  ad::Tensor by_agent = ad::matmul(ad::Tensor::constant(Matrix(n, 1, 1.0)), ad::transpose(a));
  ad::Tensor gaps = ad::sub(by_position, by_agent);
  return ad::row_softmax(ad::scale(ad::square(gaps), -1.0 / tau_prime));
}

fair::AgentPermutation hard_order(const std::vector<double>& scores) {
  return fair::AgentPermutation::from_order(descending_argsort(tie_break_values(scores)));
}

ad::Tensor nrr_forward_train(const fair::ValuationProfile& profile,
                             const NrrParamTensors& params) {
  return nrr_forward_train(profile, agent_features(profile, params.rank), params);
}

ad::Tensor nrr_forward_train(const fair::ValuationProfile& profile, const Matrix& features,
                             const NrrParamTensors& params) {
  if (params.rank > std::min(profile.agents(), profile.goods())) {
    throw std::invalid_argument("nrr_forward_train: rank exceeds min(agents, goods)");
  }
  const std::size_t m = profile.goods();

  ad::Tensor scores = score_agents(features, params);
  ad::Tensor perm = soft_sort(tie_break(scores), params.tau_prime);
  ad::Tensor permuted = ad::matmul(perm, ad::Tensor::constant(profile.matrix()));
  ad::Tensor picks = relax::soft_rr(permuted, params.tau);
  ad::Tensor restored = ad::matmul(ad::transpose(perm), picks);

  ad::Tensor denom = ad::add_detached(ad::col_sum(restored), Matrix(1, m, kNormalizationEpsilon));
  return ad::div_broadcast(restored, denom);
}

fair::AgentPermutation nrr_infer_order(const fair::ValuationProfile& profile,
                                       const NrrParams& params) {
  return nrr_infer_order(profile, agent_features(profile, params.rank), params);
}

fair::AgentPermutation nrr_infer_order(const fair::ValuationProfile& profile,
                                       const Matrix& features, const NrrParams& params) {
  if (params.rank > std::min(profile.agents(), profile.goods())) {
    throw std::invalid_argument("nrr_infer_order: rank exceeds min(agents, goods)");
  }
  // Constant-graph evaluation reuses the training kernels, keeping the hard
  // path bit-consistent with the soft forward pass.
  ad::Tensor scores = score_agents(features, as_constants(params));
  return hard_order(column_to_vector(scores.value()));
}

fair::IntegralAllocation nrr_infer(const fair::ValuationProfile& profile,
                                   const NrrParams& params) {
  return fair::round_robin_induced(profile, nrr_infer_order(profile, params));
}

fair::IntegralAllocation nrr_infer(const fair::ValuationProfile& profile, const Matrix& features,
                                   const NrrParams& params) {
  return fair::round_robin_induced(profile, nrr_infer_order(profile, features, params));
}

namespace {

void append_matrix_json(std::string& out, const Matrix& m) {
  out += "[";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (i) out += ",";
    out += "[";
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ",";
      out += io::format_double17(m(i, j));
    }
    out += "]";
  }
  out += "]";
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::runtime_error("checkpoint: malformed matrix");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw std::runtime_error("checkpoint: ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

}  // namespace

std::string checkpoint_to_json(const NrrParams& params) {
  std::string out = "{\n";
  out += "  \"format\": \"nrr-checkpoint\",\n";
  out += "  \"rank\": " + std::to_string(params.rank) + ",\n";
  out += "  \"tau\": " + io::format_double17(params.tau) + ",\n";
  out += "  \"tau_prime\": " + io::format_double17(params.tau_prime) + ",\n";
  out += "  \"seed\": " + std::to_string(params.init_seed) + ",\n";
  out += "  \"layers\": [\n";
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    out += "    {\"in\": " + std::to_string(layer.weight.rows()) +
           ", \"out\": " + std::to_string(layer.weight.cols()) + ", \"weight\": ";
    append_matrix_json(out, layer.weight);
    out += ", \"bias\": ";
    append_matrix_json(out, layer.bias);
    out += l + 1 < params.layers.size() ? "},\n" : "}\n";
  }
  out += "  ]\n}\n";
  return out;
}

NrrParams checkpoint_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  if (j.value("format", "") != std::string("nrr-checkpoint")) {
    throw std::runtime_error("checkpoint: unrecognized document format");
  }
  NrrParams params;
  params.rank = j.at("rank").get<std::size_t>();
  params.tau = j.at("tau").get<double>();
  params.tau_prime = j.at("tau_prime").get<double>();
  params.init_seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jl : j.at("layers")) {
    MlpLayer layer{matrix_from_json(jl.at("weight")), matrix_from_json(jl.at("bias"))};
    if (layer.weight.rows() != jl.at("in").get<std::size_t>() ||
        layer.weight.cols() != jl.at("out").get<std::size_t>() ||
        layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw std::runtime_error("checkpoint: layer shape fields disagree with data");
    }
    params.layers.push_back(std::move(layer));
  }
  if (params.layers.empty()) throw std::runtime_error("checkpoint: no layers");
  if (params.layers.front().weight.rows() != params.feature_width()) {
    throw std::runtime_error("checkpoint: first layer width does not match rank + 2");
  }
  if (params.layers.back().weight.cols() != 1) {
    throw std::runtime_error("checkpoint: last layer must have a single output");
  }
  return params;
}

void save_checkpoint(const NrrParams& params, const std::string& path) {
  io::write_file_atomic(path, checkpoint_to_json(params));
}

NrrParams load_checkpoint(const std::string& path) {
  return checkpoint_from_json(io::read_file(path));
}

}  // namespace nrr::model
