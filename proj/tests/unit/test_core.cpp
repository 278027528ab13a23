#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "profmon/core.hpp"
#include "profmon/error.hpp"
#include "support.hpp"

using namespace profmon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "profmon_unit";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a profmon::Error");
  return ErrorKind::invalid_input;
}

}  // namespace

TEST_CASE("batch validation") {
  ObservationBatch b(3, 2, {0.1, 0.2, 0.3, 0.4}, {1.0, 2.0});
  CHECK(b.n() == 2);
  CHECK(b.p() == 2);
  CHECK(b.time_index() == 3);
  CHECK(b.row(1)[0] == 0.3);

  CHECK(kind_of([] { ObservationBatch(0, 2, {0.1, 0.2, 0.3}, {1.0, 2.0}); }) == ErrorKind::invalid_input);
  CHECK(kind_of([] { ObservationBatch(0, 1, {}, {}); }) == ErrorKind::invalid_input);
  CHECK(kind_of([] { ObservationBatch(0, 1, {0.1}, {std::nan("")}); }) == ErrorKind::invalid_input);
}

TEST_CASE("ecdf examples") {
  const std::vector<double> v{1, 2, 3};
  Ecdf e(v);
  CHECK(e(4.0) == 1.0);
  CHECK(e(1.5) == doctest::Approx(1.0 / 3.0));
  CHECK(e(0.0) == 0.0);
  CHECK(e(1.0) == doctest::Approx(1.0 / 3.0));  // right-continuous
  CHECK(ecdf_eval(e, 3.0) == 1.0);

  ResidualSample rs{7, {2.0, 2.0, 1.0, 5.0}};
  auto f = ecdf_build(rs);
  CHECK(f(2.0) == 0.75);  // tie multiplicity 2 gives a jump of 2/4
  CHECK(f(1.999) == 0.25);
}

TEST_CASE("ecdf rejects empty and non-finite input") {
  CHECK(kind_of([] { Ecdf(std::vector<double>{}); }) == ErrorKind::invalid_input);
  CHECK(kind_of([] { Ecdf(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}); }) ==
        ErrorKind::invalid_input);
  CHECK(kind_of([] { Ecdf(std::vector<double>{std::nan("")}); }) == ErrorKind::invalid_input);
}

TEST_CASE("ecdf properties") {
  testkit::Gen g(101);
  for (int rep = 0; rep < 200; ++rep) {
    const auto n = static_cast<std::size_t>(g.integer(1, 30));
    auto v = rep % 2 ? g.grid_sample(n, -3, 3) : g.normal_sample(n);
    Ecdf e(v);

    // agrees with direct counting, and is monotone, on a probe set
    std::vector<double> probes = v;
    for (int k = 0; k < 20; ++k) probes.push_back(g.uniform(-4.0, 4.0));
    std::sort(probes.begin(), probes.end());
    double prev = 0.0;
    for (double z : probes) {
      CHECK(e(z) == testkit::count_le(v, z));
      CHECK(e(z) >= prev);
      prev = e(z);
    }

    // at the k-th order statistic the value is (#values <= it)/n
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < n; ++k) {
      const auto upto = std::upper_bound(sorted.begin(), sorted.end(), sorted[k]) - sorted.begin();
      CHECK(e(sorted[k]) == static_cast<double>(upto) / static_cast<double>(n));
    }

    // permutation invariance
    auto shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), g.rng);
    Ecdf e2(shuffled);
    for (double z : probes) CHECK(e2(z) == e(z));
  }
}

TEST_CASE("batch csv round trip") {
  ObservationBatch b(0, 3, {0.1, 0.2, 0.3, 1.0 / 3.0, 0.5, 0.6}, {1.25, -2.0 / 7.0});
  const auto path = scratch("rt.csv");
  write_batch_csv(path, b);
  auto r = read_batch_csv(path, 4);
  CHECK(r.time_index() == 4);
  CHECK(r.p() == 3);
  REQUIRE(r.n() == 2);
  CHECK(std::equal(r.predictors().begin(), r.predictors().end(), b.predictors().begin()));
  CHECK(std::equal(r.responses().begin(), r.responses().end(), b.responses().begin()));
}

TEST_CASE("stream csv groups rows by t") {
  const auto path = scratch("stream.csv");
  write_file(path, "t,x1,x2,y\n1,0.1,0.2,3\n1,0.3,0.4,4\n2,0.5,0.6,5\n4,0.7,0.8,6\n");
  auto s = read_stream_csv(path);
  REQUIRE(s.size() == 3);
  CHECK(s[0].time_index() == 1);
  CHECK(s[0].n() == 2);
  CHECK(s[1].time_index() == 2);
  CHECK(s[2].time_index() == 4);
  CHECK(s[2].responses()[0] == 6.0);

  write_file(path, "t,x1,y\n2,0.1,3\n1,0.2,4\n");
  CHECK(kind_of([&] { read_stream_csv(path); }) == ErrorKind::parse);
}

TEST_CASE("malformed csv is rejected") {
  const auto path = scratch("bad.csv");
  write_file(path, "x1,x2,y\n0.1,0.2\n");
  CHECK(kind_of([&] { read_batch_csv(path); }) == ErrorKind::parse);
  write_file(path, "x1,x2,y\n0.1,abc,3\n");
  CHECK(kind_of([&] { read_batch_csv(path); }) == ErrorKind::parse);
  write_file(path, "a,b\n0.1,3\n");
  CHECK(kind_of([&] { read_batch_csv(path); }) == ErrorKind::parse);
  write_file(path, "x1,y\n");
  CHECK(kind_of([&] { read_batch_csv(path); }) == ErrorKind::invalid_input);
  CHECK(kind_of([&] { read_batch_csv(scratch("missing.csv")); }) == ErrorKind::io);
}

TEST_CASE("csv listing is sorted") {
  const auto dir = scratch("listing");
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_file(dir / "b.csv", "x1,y\n0.1,1\n");
  write_file(dir / "a.csv", "x1,y\n0.1,1\n");
  write_file(dir / "c.txt", "");
  auto files = list_csv_files(dir);
  REQUIRE(files.size() == 2);
  CHECK(files[0].filename() == "a.csv");
  CHECK(files[1].filename() == "b.csv");
}
