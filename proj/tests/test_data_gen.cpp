#include <doctest.h>

#include <cmath>
#include <vector>

#include "nrr/data_gen.hpp"
#include "nrr/io_util.hpp"
#include "nrr/rng.hpp"

using namespace nrr;
using fair::IntegralAllocation;

namespace {

bool equal_datasets(const data::Dataset& a, const data::Dataset& b) {
  if (a.meta.n != b.meta.n || a.meta.m != b.meta.m || a.meta.count != b.meta.count ||
      a.meta.seed != b.meta.seed || a.meta.generator != b.meta.generator ||
      a.meta.labeler != b.meta.labeler || a.meta.resample_count != b.meta.resample_count) {
    return false;
  }
  if (a.samples.size() != b.samples.size()) return false;
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    if (!(a.samples[k].profile.matrix() == b.samples[k].profile.matrix())) return false;
    if (!(a.samples[k].allocation == b.samples[k].allocation)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("sampled valuations live in the documented band") {
  RngStream rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const auto profile = data::sample_profile(6, 9, rng);
    for (std::size_t i = 0; i < 6; ++i) {
      double lo = 1e300;
      double hi = -1e300;
      for (std::size_t j = 0; j < 9; ++j) {
        const double v = profile.value(i, j);
        CHECK(v >= 1.0);
        CHECK(v <= 2.01);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(hi - lo <= 0.01);  // the per-good noise bounds the row spread
    }
  }
}

TEST_CASE("sampling is deterministic in the stream seed") {
  RngStream a(99);
  RngStream b(99);
  CHECK(data::sample_profile(4, 7, a).matrix() == data::sample_profile(4, 7, b).matrix());
}

TEST_CASE("generated rows never carry exact ties") {
  RngStream rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto profile = data::sample_profile(3, 8, rng);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t a = 0; a + 1 < 8; ++a) {
        for (std::size_t b = a + 1; b < 8; ++b) {
          CHECK(profile.value(i, a) != profile.value(i, b));
        }
      }
    }
  }
}

TEST_CASE("dataset generation labels every sample with the welfare maximizer") {
  const data::Dataset ds = data::generate_dataset(3, 4, 30, 7);
  CHECK(ds.meta.n == 3);
  CHECK(ds.meta.m == 4);
  CHECK(ds.meta.count == 30);
  CHECK(ds.meta.generator == "uniform-lowrank");
  CHECK(ds.meta.labeler == "muw");
  REQUIRE(ds.samples.size() == 30);
  for (const auto& sample : ds.samples) {
    CHECK(sample.allocation == fair::muw_allocation(sample.profile));
    // unit column sums, structurally
    const Matrix m = sample.allocation.to_matrix();
    for (std::size_t j = 0; j < 4; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < 3; ++i) total += m(i, j);
      CHECK(total == 1.0);
    }
  }
}

TEST_CASE("a lone agent owns every label") {
  const data::Dataset ds = data::generate_dataset(1, 3, 1, 5);
  CHECK(ds.samples[0].allocation.bundle(0).size() == 3);
}

TEST_CASE("generation rejects bad arguments") {
  CHECK_THROWS_AS(data::generate_dataset(3, 4, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(data::generate_dataset(3, 4, 1, 1, "nash"), std::invalid_argument);
}

TEST_CASE("datasets round-trip through their on-disk form exactly") {
  const data::Dataset ds = data::generate_dataset(4, 5, 12, 123);
  const std::string text = data::dataset_to_json(ds);
  CHECK(equal_datasets(ds, data::dataset_from_json(text)));
}

TEST_CASE("loading validates labels and column sums with the sample index") {
  const data::Dataset ds = data::generate_dataset(2, 2, 2, 9);
  std::string text = data::dataset_to_json(ds);

  // a column that sums to two
  const std::string needle = "\"allocation\": [[";
  const auto pos = text.find(needle);
  REQUIRE(pos != std::string::npos);
  std::string tampered = text;
  tampered[pos + needle.size()] = tampered[pos + needle.size()] == '1' ? '0' : '1';
  CHECK_THROWS_WITH_AS(data::dataset_from_json(tampered), doctest::Contains("sample 0"),
                       std::runtime_error);

  // an empty samples array
  const auto samples_pos = text.find("\"samples\"");
  std::string emptied = text.substr(0, samples_pos) + "\"samples\": []\n}\n";
  CHECK_THROWS_AS(data::dataset_from_json(emptied), std::runtime_error);
}

TEST_CASE("a swapped label is caught as not welfare-maximizing") {
  const data::Dataset ds = data::generate_dataset(2, 2, 1, 17);
  std::string text = data::dataset_to_json(ds);
  const auto pos = text.find("\"allocation\": ");
  REQUIRE(pos != std::string::npos);
  const auto open = text.find('[', pos);
  const auto close = text.find("]]", open);
  const std::size_t owner0 = ds.samples[0].allocation.owner(0);
  const std::size_t owner1 = ds.samples[0].allocation.owner(1);
  // swap both goods to the other agent, keeping columns one-hot
  std::string rows = owner0 == 0 ? (owner1 == 0 ? "[0,0],[1,1]" : "[0,1],[1,0]")
                                 : (owner1 == 0 ? "[1,0],[0,1]" : "[1,1],[0,0]");
  std::string tampered = text.substr(0, open) + "[" + rows + text.substr(close + 1);
  CHECK_THROWS_WITH_AS(data::dataset_from_json(tampered),
                       doctest::Contains("welfare-maximizing"), std::runtime_error);
}

TEST_CASE("a pinned seed produces a pinned digest") {
  const data::Dataset ds = data::generate_dataset(2, 3, 2, 42);
  CHECK(io::fnv1a64_hex(data::dataset_to_json(ds)) == "3a01a095a6c60044");
  CHECK(io::format_double17(ds.samples[0].profile.value(0, 0)) == "1.34815541746149");
}

TEST_CASE("labels attain the exhaustive welfare maximum on small shapes") {
  const data::Dataset ds = data::generate_dataset(3, 5, 20, 55);
  for (const auto& sample : ds.samples) {
    const double achieved = fair::utilitarian_welfare(sample.profile, sample.allocation);
    std::vector<std::size_t> owner(5, 0);
    while (true) {
      CHECK(fair::utilitarian_welfare(sample.profile, IntegralAllocation(3, owner)) <= achieved);
      std::size_t pos = 0;
      while (pos < 5 && ++owner[pos] == 3) owner[pos++] = 0;
      if (pos == 5) break;
    }
  }
}
