#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "psm/safety_dataset.hpp"
#include "test_util.hpp"

using namespace psm;
using testutil::Rng;

namespace {

ImuSample sample_at(double t, const Vec3& theta_m, const Vec3& theta_dot_m) {
  ImuSample s;
  s.t = t;
  s.theta_m = theta_m;
  s.theta_dot_m = theta_dot_m;
  s.a_c = Vec3{0, 0, 9.8};
  return s;
}

std::vector<ImuSample> pinned_recording(const Vec3& theta_m, int n) {
  std::vector<ImuSample> rec;
  for (int i = 0; i < n; ++i) rec.push_back(sample_at(0.02 * i, theta_m, Vec3{}));
  return rec;
}

}  // namespace

TEST_CASE("gravity angle: upright and horizontal poses") {
  CHECK(gravity_angle(0.0, 0.0, 0.2) == 0.0);
  CHECK(gravity_angle(0.0, M_PI / 2.0, 0.2) ==
        doctest::Approx(M_PI / 2.0).epsilon(1e-12));
}

TEST_CASE("gravity angle matches the torso-to-vertical geometric oracle") {
  // both formulas express the angle between the body axis and gravity
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j) {
      double tx = -1.2 + 2.4 * i / 99.0;
      double ty = -1.2 + 2.4 * j / 99.0;
      double got = gravity_angle(tx, ty, 0.2);
      double expect = std::acos(std::cos(tx) * std::cos(ty));
      worst = std::max(worst, std::abs(got - expect));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("gravity angle is continuous across the branch boundary") {
  // the branch switches where cos(tx)cos(ty) crosses zero; walk ty through
  // pi/2 at 100 different tx values
  const double delta = 1e-7;
  for (int k = 0; k < 100; ++k) {
    double tx = -1.3 + 2.6 * k / 99.0;
    double below = gravity_angle(tx, M_PI / 2.0 - delta, 0.2);
    double above = gravity_angle(tx, M_PI / 2.0 + delta, 0.2);
    CHECK(std::abs(below - above) < 1e-6);
  }
}

TEST_CASE("gravity angle grows monotonically along tilt rays") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    double ang = rng.uniform(0.0, 2.0 * M_PI);
    double dx = std::cos(ang), dy = std::sin(ang);
    double scale = (M_PI / 2.0) / std::max(std::abs(dx), std::abs(dy));
    double prev = -1.0;
    for (int step = 0; step <= 40; ++step) {
      double r = scale * step / 40.0;
      double tg = gravity_angle(r * dx, r * dy, 0.2);
      CHECK(tg >= prev - 1e-12);
      prev = tg;
    }
  }
}

TEST_CASE("omega norm") {
  CHECK(omega_norm(Vec3{}, 2.5).value == 0.0);
  ClippedValue v = omega_norm(Vec3{0.3, 0.4, 0.0}, 2.5);
  CHECK(v.value == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_FALSE(v.clipped);
  ClippedValue c = omega_norm(Vec3{3, 0, 0}, 2.5);
  CHECK(c.value == 2.5);
  CHECK(c.clipped);
}

TEST_CASE("binning: corners and clamping") {
  GridSpec spec;
  GridIndex lo = bin_of(spec.theta_g_min, 0.0, spec);
  CHECK(lo.n == 0);
  CHECK(lo.m == 0);
  CHECK_FALSE(lo.clamped);
  GridIndex hi = bin_of(spec.theta_g_max, spec.omega_max, spec);
  CHECK(hi.n == spec.n_theta - 1);
  CHECK(hi.m == spec.m_omega - 1);
  CHECK(hi.clamped);
}

TEST_CASE("binning: bin_of inverts value_of on every grid point") {
  GridSpec spec;  // Table-like 33x33 over [-1, pi/2] x [0, 2.5]
  for (int n = 0; n < spec.n_theta; ++n) {
    for (int m = 0; m < spec.m_omega; ++m) {
      auto [tg, w] = value_of(n, m, spec);
      GridIndex idx = bin_of(tg, w, spec);
      CHECK(idx.n == n);
      CHECK(idx.m == m);
    }
  }
}

TEST_CASE("binning: value_of(bin_of(x)) moves x by at most half a cell") {
  GridSpec spec;
  Rng rng(77);
  double cell_t = spec.theta_range() / spec.n_theta;
  double cell_w = spec.omega_max / spec.m_omega;
  for (int trial = 0; trial < 500; ++trial) {
    double tg = rng.uniform(spec.theta_g_min, spec.theta_g_max);
    double w = rng.uniform(0.0, spec.omega_max);
    GridIndex idx = bin_of(tg, w, spec);
    auto [tg2, w2] = value_of(idx.n, idx.m, spec);
    if (!idx.clamped) {
      CHECK(std::abs(tg2 - tg) <= cell_t / 2.0 + 1e-12);
      CHECK(std::abs(w2 - w) <= cell_w / 2.0 + 1e-12);
    }
  }
}

TEST_CASE("binning: origin bin maps to the grid origin") {
  GridSpec spec;
  auto [tg, w] = value_of(0, 0, spec);
  CHECK(tg == spec.theta_g_min);
  CHECK(w == 0.0);
}

TEST_CASE("binning: midpoint of an even grid maps to the range midpoint") {
  GridSpec spec;
  spec.n_theta = 10;
  auto [tg, w] = value_of(5, 0, spec);
  CHECK(tg == doctest::Approx(spec.theta_range() / 2.0 + spec.theta_g_min));
  CHECK(w == 0.0);
}

TEST_CASE("binning: out-of-grid indices are rejected") {
  GridSpec spec;
  CHECK_THROWS_AS((void)value_of(-1, 0, spec), Error);
  CHECK_THROWS_AS((void)value_of(0, spec.m_omega, spec), Error);
}

TEST_CASE("build_dataset: empty input is an error") {
  GridSpec spec;
  BodyParams p = default_body_params();
  std::vector<std::vector<ImuSample>> none;
  CHECK_THROWS_AS((void)build_dataset(none, spec, p), Error);
}

TEST_CASE("build_dataset: pinned pose yields one cell at the cap") {
  GridSpec spec;
  BodyParams p = default_body_params();
  std::vector<std::vector<ImuSample>> recs{pinned_recording(Vec3{0.3, 0.2, 0}, 50)};
  for (bool smooth : {false, true}) {
    BuildOptions opt;
    opt.smooth = smooth;
    SafetyDataset ds = build_dataset(recs, spec, p, opt);
    int nonzero = 0;
    double peak = 0.0;
    for (const auto& row : ds.P)
      for (double v : row) {
        if (v > 0.0) ++nonzero;
        peak = std::max(peak, v);
      }
    CHECK(nonzero == 1);
    CHECK(peak == doctest::Approx(kProbabilityCap));
  }
}

TEST_CASE("build_dataset: two equal-length recordings give two capped cells") {
  GridSpec spec;
  BodyParams p = default_body_params();
  std::vector<std::vector<ImuSample>> recs{
      pinned_recording(Vec3{0.2, 0.0, 0}, 40),
      pinned_recording(Vec3{1.1, 0.9, 0}, 40)};
  BuildOptions opt;
  opt.smooth = false;
  SafetyDataset ds = build_dataset(recs, spec, p, opt);
  std::vector<double> nonzero;
  for (const auto& row : ds.P)
    for (double v : row)
      if (v > 0.0) nonzero.push_back(v);
  REQUIRE(nonzero.size() == 2);
  CHECK(nonzero[0] == doctest::Approx(kProbabilityCap));
  CHECK(nonzero[1] == doctest::Approx(kProbabilityCap));
}

TEST_CASE("build_dataset: Gaussian velocity sweep matches a histogram oracle") {
  GridSpec spec;
  BodyParams p = default_body_params();
  Rng rng(2024);
  std::vector<ImuSample> rec;
  std::vector<std::int64_t> oracle(spec.m_omega, 0);
  Vec3 pose{0.4, 0.1, 0.0};
  for (int i = 0; i < 4000; ++i) {
    // Box-Muller on the deterministic generator
    double u1 = rng.uniform(1e-12, 1.0), u2 = rng.uniform(0.0, 1.0);
    double w = std::abs(1.0 + 0.3 * std::sqrt(-2.0 * std::log(u1)) *
                                  std::cos(2.0 * M_PI * u2));
    rec.push_back(sample_at(0.02 * i, pose, Vec3{w, 0, 0}));
    double clipped = std::min(w, spec.omega_max);
    oracle[bin_of(0.0, clipped, spec).m] += 1;
  }
  BuildOptions opt;
  opt.smooth = false;
  SafetyDataset ds = build_dataset({rec}, spec, p, opt);

  // marginal over omega equals the directly-computed histogram
  int pose_row = bin_of(gravity_angle(pose.x, pose.y, p.l_b), 0.0, spec).n;
  for (int m = 0; m < spec.m_omega; ++m) {
    std::int64_t col_sum = 0;
    for (int n = 0; n < spec.n_theta; ++n) col_sum += ds.counts[n][m];
    CHECK(col_sum == oracle[m]);
    CHECK(ds.counts[pose_row][m] == oracle[m]);
  }

  // unimodal with mode near the sweep mean: the mode neighborhood holds more
  // mass than both tails combined
  int mode = static_cast<int>(std::max_element(oracle.begin(), oracle.end()) -
                              oracle.begin());
  double mode_omega = value_of(0, mode, spec).second;
  CHECK(std::abs(mode_omega - 1.0) < 2.0 * spec.omega_max / spec.m_omega);
  std::int64_t near = 0, far = 0;
  for (int m = 0; m < spec.m_omega; ++m)
    (std::abs(m - mode) <= 4 ? near : far) += oracle[m];
  CHECK(near > far);
}

TEST_CASE("build_dataset is permutation invariant") {
  GridSpec spec;
  BodyParams p = default_body_params();
  auto a = pinned_recording(Vec3{0.2, 0.1, 0}, 30);
  auto b = pinned_recording(Vec3{0.8, -0.4, 0}, 45);
  auto c = pinned_recording(Vec3{0.5, 0.5, 0}, 10);
  SafetyDataset d1 = build_dataset({a, b, c}, spec, p);
  SafetyDataset d2 = build_dataset({c, a, b}, spec, p);
  CHECK(d1.P == d2.P);
  CHECK(d1.counts == d2.counts);
}

TEST_CASE("smoothing never leaks probability into unvisited cells") {
  GridSpec spec;
  BodyParams p = default_body_params();
  std::vector<std::vector<ImuSample>> recs{
      pinned_recording(Vec3{0.3, 0.2, 0}, 50),
      pinned_recording(Vec3{0.32, 0.22, 0}, 20)};
  SafetyDataset ds = build_dataset(recs, spec, p);  // smooth on by default
  for (int n = 0; n < spec.n_theta; ++n)
    for (int m = 0; m < spec.m_omega; ++m)
      if (ds.counts[n][m] == 0) CHECK(ds.P[n][m] == 0.0);
  ds.validate();
}

TEST_CASE("lookup: exhaustive agreement with the stored grid") {
  GridSpec spec;
  spec.n_theta = 7;
  spec.m_omega = 5;
  BodyParams p = default_body_params();
  Rng rng(55);
  std::vector<ImuSample> rec;
  for (int i = 0; i < 300; ++i) {
    Vec3 pose{rng.uniform(0.0, 1.2), rng.uniform(0.0, 1.2), 0.0};
    Vec3 vel{rng.uniform(0.0, 2.0), 0.0, 0.0};
    rec.push_back(sample_at(0.02 * i, pose, vel));
  }
  SafetyDataset ds = build_dataset({rec}, spec, p);
  for (int n = 0; n < spec.n_theta; ++n)
    for (int m = 0; m < spec.m_omega; ++m) {
      auto [tg, w] = value_of(n, m, spec);
      CHECK(ds.lookup(tg, w) == ds.P[n][m]);
    }
}

TEST_CASE("lookup on a pinned-pose dataset") {
  GridSpec spec;
  BodyParams p = default_body_params();
  Vec3 pose{0.3, 0.2, 0.0};
  SafetyDataset ds = build_dataset({pinned_recording(pose, 50)}, spec, p);
  double tg = gravity_angle(pose.x, pose.y, p.l_b);
  CHECK(ds.lookup(tg, 0.0) == doctest::Approx(kProbabilityCap));
  CHECK(ds.lookup(tg + 0.5, 2.0) == 0.0);
}

TEST_CASE("dataset JSON round-trip") {
  GridSpec spec;
  BodyParams p = default_body_params();
  BuildOptions opt;
  opt.meta.recordings = {"a.csv", "b.csv"};
  opt.meta.tool = "psm";
  SafetyDataset ds = build_dataset(
      {pinned_recording(Vec3{0.2, 0.1, 0}, 30),
       pinned_recording(Vec3{0.9, -0.3, 0}, 12)},
      spec, p, opt);
  nlohmann::json j = to_json(ds);
  SafetyDataset back = dataset_from_json(j);
  CHECK(back.P == ds.P);
  CHECK(back.counts == ds.counts);
  CHECK(back.spec == ds.spec);
  CHECK(back.meta.recordings == ds.meta.recordings);

  nlohmann::json bad = j;
  bad["spec"]["typo_key"] = 1;
  CHECK_THROWS_AS((void)dataset_from_json(bad), Error);
}
