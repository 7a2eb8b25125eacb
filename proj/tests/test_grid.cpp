#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "recon/field_io.hpp"
#include "recon/grid.hpp"
#include "recon/rng.hpp"

using namespace recon;

namespace {

Field random_field(const GridSpec& spec, uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  std::vector<double> v(spec.cells());
  for (double& x : v) x = rng.uniform(lo, hi);
  return Field(spec, std::move(v));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("log_transform anchors and oracle") {
  const GridSpec spec{2, 4, 4, 1.0};
  Field x = Field::zeros(spec);
  x.values[0] = 0.0;
  x.values[1] = std::exp(1.0) - 1.0;
  const Field y = log_transform(x);
  CHECK(y.values[0] == doctest::Approx(0.0));
  CHECK(y.values[1] == doctest::Approx(1.0).epsilon(1e-14));

  // scalar-loop reference on a random field in [0, 5]
  const Field r = random_field(spec, 11, 0.0, 5.0);
  const Field lr = log_transform(r);
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const double ref = std::log(1.0 + r.values[i]);
    CHECK(std::fabs(lr.values[i] - ref) <= 1e-12 * std::max(1.0, std::fabs(ref)));
  }
}

TEST_CASE("log_transform rejects values below -1") {
  const GridSpec spec{1, 4, 4, 1.0};
  Field x = Field::zeros(spec);
  x.values[3] = -1.5;
  CHECK_THROWS_AS(log_transform(x), Error);
  try {
    log_transform(x);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NegativeInput);
  }
}

TEST_CASE("percentile golden values: 101 points 0..100") {
  std::vector<double> pts(101);
  for (int i = 0; i <= 100; ++i) pts[i] = i;
  CHECK(percentile_sorted(pts, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(percentile_sorted(pts, 99.0) == doctest::Approx(99.0).epsilon(1e-15));
  CHECK(percentile_sorted(pts, 50.0) == doctest::Approx(50.0).epsilon(1e-15));
}

TEST_CASE("fit_normalizer matches a sort-based oracle") {
  // pooled log values are 0..111 exactly: raw = expm1(k)
  const GridSpec spec{7, 4, 4, 1.0};
  std::vector<double> v(spec.cells());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::expm1(static_cast<double>(i));
  const NormParams p = fit_normalizer({Field(spec, v)});

  std::vector<double> logs(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) logs[i] = std::log1p(v[i]);
  std::sort(logs.begin(), logs.end());
  const double rank_lo = 0.01 * (logs.size() - 1);
  const double rank_hi = 0.99 * (logs.size() - 1);
  auto interp = [&](double rank) {
    const std::size_t lo = static_cast<std::size_t>(rank);
    return logs[lo] + (rank - lo) * (logs[lo + 1] - logs[lo]);
  };
  CHECK(p.q_lo == doctest::Approx(interp(rank_lo)).epsilon(1e-12));
  CHECK(p.q_hi == doctest::Approx(interp(rank_hi)).epsilon(1e-12));
}

TEST_CASE("fit_normalizer half zeros half e-1") {
  const GridSpec spec{8, 4, 4, 1.0};
  std::vector<double> v(spec.cells(), 0.0);
  for (std::size_t i = v.size() / 2; i < v.size(); ++i) v[i] = std::exp(1.0) - 1.0;
  const NormParams p = fit_normalizer({Field(spec, v)});
  CHECK(p.q_lo == doctest::Approx(0.0));
  CHECK(p.q_hi == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit_normalizer rejects constant data") {
  const GridSpec spec{7, 4, 4, 1.0};
  const Field x = Field::constant(spec, 0.3);
  try {
    fit_normalizer({x});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateDistribution);
  }
}

TEST_CASE("fit_normalizer is permutation-invariant") {
  const GridSpec spec{4, 4, 4, 1.0};
  const Field a = random_field(spec, 1, 0.0, 3.0);
  const Field b = random_field(spec, 2, 0.0, 10.0);
  const Field c = random_field(spec, 3, 0.5, 1.5);
  const NormParams p1 = fit_normalizer({a, b, c});
  const NormParams p2 = fit_normalizer({c, a, b});
  CHECK(p1.q_lo == p2.q_lo);
  CHECK(p1.q_hi == p2.q_hi);
}

TEST_CASE("normalize anchors and midpoint") {
  const NormParams p{0.2, 1.7};
  const GridSpec spec{1, 4, 4, 1.0};
  Field x = Field::zeros(spec);
  x.values[0] = std::expm1(p.q_lo);
  x.values[1] = std::expm1(p.q_hi);
  x.values[2] = std::expm1(0.5 * (p.q_lo + p.q_hi));
  const Field n = normalize(x, p);
  CHECK(n.values[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(n.values[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(n.values[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("denormalize inverts normalize to 1e-10") {
  const NormParams p{0.1, 2.3};
  const GridSpec spec{3, 8, 8, 1.0};
  Rng rng(42);
  std::vector<double> v(spec.cells());
  for (double& x : v) x = std::pow(10.0, rng.uniform(-3.0, 6.0));  // up to 1e6
  const Field x(spec, v);
  const Field round = denormalize(normalize(x, p), p);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(std::fabs(round.values[i] - v[i]) <= 1e-10 * std::max(1.0, std::fabs(v[i])));
  }

  // anchors of the inverse
  Field n = Field::zeros(spec);
  n.values[0] = 0.0;
  n.values[1] = -1.0;
  const Field d = denormalize(n, p);
  CHECK(d.values[0] == doctest::Approx(std::exp(0.5 * (p.q_lo + p.q_hi)) - 1.0));
  CHECK(d.values[1] == doctest::Approx(std::exp(p.q_lo) - 1.0));
}

TEST_CASE("normalize is monotone and preserves the argmax") {
  const NormParams p{0.0, 1.0};
  const GridSpec spec{1, 8, 8, 1.0};
  const Field x = random_field(spec, 77, 0.0, 4.0);
  const Field n = normalize(x, p);
  const auto arg_x = std::max_element(x.values.begin(), x.values.end()) - x.values.begin();
  const auto arg_n = std::max_element(n.values.begin(), n.values.end()) - n.values.begin();
  CHECK(arg_x == arg_n);
  // strict monotonicity on sorted pairs
  for (std::size_t i = 1; i < x.values.size(); ++i) {
    if (x.values[i] > x.values[i - 1]) {
      CHECK(n.values[i] > n.values[i - 1]);
    }
  }
}

TEST_CASE("field constructor rejects NaN and shape mismatch") {
  const GridSpec spec{1, 4, 4, 1.0};
  std::vector<double> bad(spec.cells(), 0.0);
  bad[5] = std::nan("");
  CHECK_THROWS_AS(Field(spec, bad), Error);
  CHECK_THROWS_AS(Field(spec, std::vector<double>(3, 0.0)), Error);
  CHECK_THROWS_AS(MaskField(spec, std::vector<uint8_t>(spec.cells(), 2)), Error);
}

TEST_CASE("AODF round trip is bit-exact") {
  const GridSpec spec{3, 5, 4, 6.0};
  Rng rng(9);
  std::vector<double> v(spec.cells());
  for (double& x : v) {
    x = static_cast<double>(static_cast<float>(rng.uniform(-1e6, 1e6)));
  }
  const Field f(spec, v);
  const std::string path = temp_path("recon_test_field.aodf");
  write_field(f, path);
  const Field g = read_field(path);
  REQUIRE(g.spec == spec);
  CHECK(g.spec.n_time == 3);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(g.values[i] == v[i]);

  MaskField m(spec, std::vector<uint8_t>(spec.cells(), 0));
  for (std::size_t i = 0; i < m.flags.size(); i += 3) m.flags[i] = 1;
  const std::string mpath = temp_path("recon_test_mask.aodf");
  write_mask(m, mpath);
  const MaskField mm = read_mask(mpath);
  CHECK(mm.flags == m.flags);
}

TEST_CASE("AODF rejects bad magic and truncated payload") {
  const std::string path = temp_path("recon_test_bad.aodf");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "NOPE0000000000000000000000000000";
  }
  try {
    read_field(path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FormatError);
  }

  const GridSpec spec{1, 4, 4, 1.0};
  const std::string path2 = temp_path("recon_test_trunc.aodf");
  write_field(Field::zeros(spec), path2);
  const auto size = std::filesystem::file_size(path2);
  std::filesystem::resize_file(path2, size - 8);
  try {
    read_field(path2);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FormatError);
  }
}
