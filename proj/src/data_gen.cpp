#include "nrr/data_gen.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "nrr/io_util.hpp"

namespace nrr::data {

namespace {

bool row_has_tie(const Matrix& v, std::size_t row) {
  for (std::size_t a = 0; a + 1 < v.cols(); ++a) {
    for (std::size_t b = a + 1; b < v.cols(); ++b) {
      if (v(row, a) == v(row, b)) return true;
    }
  }
  return false;
}

}  // namespace

fair::ValuationProfile sample_profile(std::size_t n, std::size_t m, RngStream& rng,
                                      std::uint64_t* resample_counter) {
  if (n < 1 || m < 1) throw std::invalid_argument("sample_profile: n and m must be >= 1");
  std::vector<double> mu(n);
  for (std::size_t i = 0; i < n; ++i) mu[i] = rng.next_uniform(1.0, 2.0);
  Matrix v(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) v(i, j) = mu[i] + rng.next_uniform(0.0, 0.01);
  }
  for (std::size_t i = 0; i < n; ++i) {
    while (row_has_tie(v, i)) {
      for (std::size_t j = 0; j < m; ++j) v(i, j) = mu[i] + rng.next_uniform(0.0, 0.01);
      if (resample_counter) ++*resample_counter;
    }
  }
  return fair::ValuationProfile(std::move(v));
}

Dataset generate_dataset(std::size_t n, std::size_t m, std::size_t count, std::uint64_t seed,
                         const std::string& labeler) {
  if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
  if (labeler != "muw") {
    throw std::invalid_argument("generate_dataset: unknown labeler \"" + labeler + "\"");
  }
  Dataset ds;
  ds.meta.n = n;
  ds.meta.m = m;
  ds.meta.count = count;
  ds.meta.seed = seed;
  ds.meta.labeler = labeler;
  ds.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    RngStream rng(mix_seed(seed, k));
    fair::ValuationProfile profile = sample_profile(n, m, rng, &ds.meta.resample_count);
    fair::IntegralAllocation label = fair::muw_allocation(profile);
    ds.samples.push_back(Sample{std::move(profile), std::move(label)});
  }
  return ds;
}

std::string dataset_to_json(const Dataset& ds) {
  std::string out = "{\n";
  out += "  \"meta\": {\"n\": " + std::to_string(ds.meta.n) +
         ", \"m\": " + std::to_string(ds.meta.m) + ", \"count\": " + std::to_string(ds.meta.count) +
         ", \"seed\": " + std::to_string(ds.meta.seed) + ", \"generator\": \"" +
         ds.meta.generator + "\", \"labeler\": \"" + ds.meta.labeler +
         "\", \"resample_count\": " + std::to_string(ds.meta.resample_count) + "},\n";
  out += "  \"samples\": [\n";
  for (std::size_t k = 0; k < ds.samples.size(); ++k) {
    const Sample& sample = ds.samples[k];
    out += "    {\"valuations\": [";
    const Matrix& v = sample.profile.matrix();
    for (std::size_t i = 0; i < v.rows(); ++i) {
      if (i) out += ",";
      out += "[";
      for (std::size_t j = 0; j < v.cols(); ++j) {
        if (j) out += ",";
        out += io::format_double17(v(i, j));
      }
      out += "]";
    }
    out += "], \"allocation\": [";
    for (std::size_t i = 0; i < sample.allocation.agents(); ++i) {
      if (i) out += ",";
      out += "[";
      for (std::size_t j = 0; j < sample.allocation.goods(); ++j) {
        if (j) out += ",";
        out += sample.allocation.owner(j) == i ? "1" : "0";
      }
      out += "]";
    }
    out += "]}";
    out += k + 1 < ds.samples.size() ? ",\n" : "\n";
  }
  out += "  ]\n}\n";
  return out;
}

Dataset dataset_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  Dataset ds;
  const auto& jm = j.at("meta");
  ds.meta.n = jm.at("n").get<std::size_t>();
  ds.meta.m = jm.at("m").get<std::size_t>();
  ds.meta.count = jm.at("count").get<std::size_t>();
  ds.meta.seed = jm.at("seed").get<std::uint64_t>();
  ds.meta.generator = jm.at("generator").get<std::string>();
  ds.meta.labeler = jm.at("labeler").get<std::string>();
  ds.meta.resample_count = jm.at("resample_count").get<std::uint64_t>();

  const auto& js = j.at("samples");
  if (js.empty()) throw std::runtime_error("dataset: empty samples array");
  if (js.size() != ds.meta.count) {
    throw std::runtime_error("dataset: meta.count " + std::to_string(ds.meta.count) +
                             " does not match " + std::to_string(js.size()) + " samples");
  }

  const bool lowrank = ds.meta.generator == "uniform-lowrank";
  for (std::size_t k = 0; k < js.size(); ++k) {
    const std::string where = "dataset: sample " + std::to_string(k);
    const auto& jv = js[k].at("valuations");
    if (jv.size() != ds.meta.n) throw std::runtime_error(where + ": wrong agent count");
    Matrix v(ds.meta.n, ds.meta.m);
    for (std::size_t i = 0; i < ds.meta.n; ++i) {
      if (jv[i].size() != ds.meta.m) throw std::runtime_error(where + ": wrong good count");
      for (std::size_t g = 0; g < ds.meta.m; ++g) {
        const double x = jv[i][g].get<double>();
        if (!(x >= 0.0) || !std::isfinite(x)) {
          throw std::runtime_error(where + ": valuation entries must be nonnegative");
        }
        if (lowrank && (x < 1.0 || x > 2.01)) {
          throw std::runtime_error(where + ": valuation outside [1.0, 2.01]");
        }
        v(i, g) = x;
      }
    }

    const auto& ja = js[k].at("allocation");
    if (ja.size() != ds.meta.n) throw std::runtime_error(where + ": wrong allocation rows");
    Matrix a(ds.meta.n, ds.meta.m);
    for (std::size_t i = 0; i < ds.meta.n; ++i) {
      if (ja[i].size() != ds.meta.m) throw std::runtime_error(where + ": wrong allocation cols");
      for (std::size_t g = 0; g < ds.meta.m; ++g) a(i, g) = ja[i][g].get<double>();
    }

    fair::ValuationProfile profile{std::move(v)};
    auto parse_allocation = [&]() -> fair::IntegralAllocation {
      try {
        return fair::IntegralAllocation::from_matrix(a);
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(where + ": " + e.what());
      }
    };
    fair::IntegralAllocation alloc = parse_allocation();
    if (ds.meta.labeler == "muw" && !(alloc == fair::muw_allocation(profile))) {
      throw std::runtime_error(where + ": allocation is not the welfare-maximizing label");
    }
    ds.samples.push_back(Sample{std::move(profile), std::move(alloc)});
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  io::write_file_atomic(path, dataset_to_json(ds));
}

Dataset load_dataset(const std::string& path) { return dataset_from_json(io::read_file(path)); }

}  // namespace nrr::data
