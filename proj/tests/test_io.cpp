#include "doctest.h"

#include <cstdlib>
#include <sstream>

#include "psm/io.hpp"
#include "test_util.hpp"

using namespace psm;
using testutil::Rng;

TEST_CASE("CSV round-trip preserves every double exactly") {
  Rng rng(64);
  std::vector<ImuSample> samples;
  double t = 0.0;
  for (int i = 0; i < 200; ++i) {
    t += rng.uniform(1e-4, 0.1);
    ImuSample s;
    s.t = t;
    s.theta_m = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3)};
    s.theta_dot_m = Vec3{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    s.a_c = Vec3{rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-15, 15)};
    samples.push_back(s);
  }
  std::stringstream ss;
  write_csv(ss, samples);
  std::vector<ImuSample> back = read_csv(ss);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].t == samples[i].t);
    CHECK(back[i].theta_m == samples[i].theta_m);
    CHECK(back[i].theta_dot_m == samples[i].theta_dot_m);
    CHECK(back[i].a_c == samples[i].a_c);
  }
}

TEST_CASE("CSV writer emits identical bytes for identical input") {
  std::vector<ImuSample> samples;
  ImuSample s;
  s.t = 0.123456789012345;
  s.a_c = Vec3{1.0 / 3.0, -9.81, 0.0};
  samples.push_back(s);
  std::stringstream a, b;
  write_csv(a, samples);
  write_csv(b, samples);
  CHECK(a.str() == b.str());
}

TEST_CASE("CSV reader rejects malformed input") {
  std::stringstream bad_header("time,stuff\n1,2\n");
  CHECK_THROWS_AS((void)read_csv(bad_header), Error);

  std::stringstream bad_field(std::string(kCsvHeader) +
                              "\n0.1,0,0,0,0,0,0,0,0,oops\n");
  CHECK_THROWS_AS((void)read_csv(bad_field), Error);

  std::stringstream backwards(std::string(kCsvHeader) +
                              "\n0.2,0,0,0,0,0,0,0,0,9.8\n"
                              "0.1,0,0,0,0,0,0,0,0,9.8\n");
  CHECK_THROWS_AS((void)read_csv(backwards), Error);

  std::stringstream hot(std::string(kCsvHeader) +
                        "\n0.1,0,0,0,0,0,0,900,0,0\n");
  CHECK_THROWS_AS((void)read_csv(hot), Error);
}

TEST_CASE("format_double picks the shortest exact representation") {
  CHECK(format_double(0.25) == "0.25");
  CHECK(format_double(1.0) == "1");
  for (double v : {1.0 / 3.0, 0.1, 123456.789, -2.2250738585072014e-308}) {
    std::string s = format_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
}
