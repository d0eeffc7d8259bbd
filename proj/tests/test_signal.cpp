#include "doctest.h"

#include <cmath>
#include <vector>

#include "psm/signal_pipeline.hpp"
#include "test_util.hpp"

using namespace psm;
using testutil::Rng;

namespace {

std::vector<double> sine(double cycles_per_sample, std::size_t n,
                         double amplitude = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amplitude * std::sin(2.0 * M_PI * cycles_per_sample * i + phase);
  return x;
}

// Peak amplitude over the central half of the series.
double central_amplitude(const std::vector<double>& y) {
  double peak = 0.0;
  for (std::size_t i = y.size() / 4; i < 3 * y.size() / 4; ++i)
    peak = std::max(peak, std::abs(y[i]));
  return peak;
}

// Minimal quaternion rotation, used as an independent oracle for the
// rotation matrices in the gravity-compensation test.
struct Quat {
  double w, x, y, z;

  static Quat axis_angle(const Vec3& axis, double angle) {
    double s = std::sin(angle / 2.0);
    return {std::cos(angle / 2.0), axis.x * s, axis.y * s, axis.z * s};
  }

  Vec3 rotate(const Vec3& v) const {
    // q v q*
    double tx = 2.0 * (y * v.z - z * v.y);
    double ty = 2.0 * (z * v.x - x * v.z);
    double tz = 2.0 * (x * v.y - y * v.x);
    return {v.x + w * tx + (y * tz - z * ty),
            v.y + w * ty + (z * tx - x * tz),
            v.z + w * tz + (x * ty - y * tx)};
  }
};

}  // namespace

TEST_CASE("zero-phase filter: DC gain is one") {
  FilterSpec spec;  // n_f = 12, f_c = 0.42
  std::vector<double> x(200, 3.25);
  auto y = zero_phase_lowpass(x, spec);
  REQUIRE(y.size() == x.size());
  for (double v : y) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("zero-phase filter: passband tone survives within 1%") {
  FilterSpec spec;
  // 0.05 of Nyquist = 0.025 cycles/sample
  auto x = sine(0.025, 1024);
  auto y = zero_phase_lowpass(x, spec);
  ButterworthLowpass design(spec.n_f / 2, spec.f_c);
  double expect = design.magnitude_squared(0.05 * M_PI);
  CHECK(std::abs(central_amplitude(y) - expect) < 0.01);
  CHECK(central_amplitude(y) > 0.99);
}

TEST_CASE("zero-phase filter: stopband tone dies below 1e-3") {
  FilterSpec spec;
  auto x = sine(0.45, 1024);  // 0.9 of Nyquist
  auto y = zero_phase_lowpass(x, spec);
  ButterworthLowpass design(spec.n_f / 2, spec.f_c);
  CHECK(design.magnitude_squared(0.9 * M_PI) < 1e-3);
  CHECK(central_amplitude(y) < 1e-3);
}

TEST_CASE("zero-phase filter: analytic magnitude matches measured response") {
  FilterSpec spec;
  ButterworthLowpass design(spec.n_f / 2, spec.f_c);
  for (double frac : {0.1, 0.3, 0.42, 0.5, 0.7}) {
    auto x = sine(frac / 2.0, 2048);
    auto y = zero_phase_lowpass(x, spec);
    double expect = design.magnitude_squared(frac * M_PI);
    CHECK(std::abs(central_amplitude(y) - expect) < 0.01);
  }
}

TEST_CASE("zero-phase filter: odd per-pass order uses a first-order tail") {
  FilterSpec spec{6, 0.3};  // per-pass order 3: one biquad + one first-order
  std::vector<double> dc(100, -1.5);
  auto y = zero_phase_lowpass(dc, spec);
  for (double v : y) CHECK(v == doctest::Approx(-1.5).epsilon(1e-12));

  ButterworthLowpass design(3, 0.3);
  auto x = sine(0.45, 1024);  // 0.9 of Nyquist
  auto filtered = zero_phase_lowpass(x, spec);
  double expect = design.magnitude_squared(0.9 * M_PI);
  CHECK(std::abs(central_amplitude(filtered) - expect) < 0.01);
}

TEST_CASE("zero-phase filter: linearity") {
  FilterSpec spec;
  Rng rng(3);
  std::vector<double> x(300), y(300);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform(-1, 1);
    y[i] = rng.uniform(-1, 1);
  }
  double a = 1.7, b = -0.4;
  std::vector<double> mix(300);
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
  auto fx = zero_phase_lowpass(x, spec);
  auto fy = zero_phase_lowpass(y, spec);
  auto fmix = zero_phase_lowpass(mix, spec);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(std::abs(fmix[i] - (a * fx[i] + b * fy[i])) < 1e-9);
}

TEST_CASE("zero-phase filter: no group delay for a passband tone") {
  FilterSpec spec;
  auto x = sine(0.03, 512);
  auto y = zero_phase_lowpass(x, spec);
  // cross-correlation peak must sit at lag zero
  double best = -1e300;
  int best_lag = -99;
  for (int lag = -8; lag <= 8; ++lag) {
    double c = 0.0;
    for (int i = 64; i < 448; ++i) c += y[i] * x[i + lag];
    if (c > best) {
      best = c;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("zero-phase filter: short series is rejected") {
  FilterSpec spec;
  std::vector<double> x(3 * spec.n_f - 1, 1.0);
  CHECK_THROWS_AS((void)zero_phase_lowpass(x, spec), Error);
  std::vector<Vec3> xv(10);
  CHECK_THROWS_AS((void)zero_phase_lowpass(xv, spec), Error);
}

TEST_CASE("filter spec validation") {
  FilterSpec odd{11, 0.42};
  FilterSpec bad_cut{12, 1.5};
  FilterSpec ok{12, 0.42};
  CHECK_THROWS_AS(odd.validate(), Error);
  CHECK_THROWS_AS(bad_cut.validate(), Error);
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("streaming lowpass matches offline result at its latency") {
  FilterSpec spec;
  StreamingLowpass stream(spec, 128);
  Rng rng(9);
  std::vector<Vec3> xs;
  double slow = 0.0;
  for (int i = 0; i < 400; ++i) {
    slow += rng.uniform(-0.02, 0.02);
    xs.push_back(Vec3{std::sin(0.02 * i), slow, 0.5});
  }
  std::vector<std::pair<std::size_t, Vec3>> emitted;  // (input index, value)
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto out = stream.push(xs[i]);
    if (out) emitted.push_back({i - stream.latency_samples(), *out});
  }
  REQUIRE(!emitted.empty());
  auto offline = zero_phase_lowpass(xs, spec);
  // Window truncation makes the streaming result an approximation of the
  // full offline pass; at passband frequencies they agree closely.
  for (std::size_t k = 40; k < emitted.size(); ++k) {
    auto [idx, v] = emitted[k];
    CHECK(norm(v - offline[idx]) < 5e-3);
  }
}

TEST_CASE("gravity compensation: stationary sensor reads zero") {
  Mat3 r = ypr_rotation(Vec3{0.2, -0.1, 0.4});
  Vec3 a_g{0.1, -0.2, 9.8};
  CHECK(norm(gravity_compensate(a_g, r, a_g, r)) < 1e-12);
}

TEST_CASE("gravity compensation: additive offset passes through") {
  Mat3 eye = Mat3::identity();
  Vec3 a_g{0, 0, 9.8};
  Vec3 out = gravity_compensate(a_g + Vec3{1, 0, 0}, eye, a_g, eye);
  CHECK(norm(out - Vec3{1, 0, 0}) < 1e-12);
}

TEST_CASE("gravity compensation: rotation after calibration, quaternion oracle") {
  double g_mag = 9.8;
  Mat3 r0 = Mat3::identity();
  Mat3 r90 = ypr_rotation(Vec3{M_PI / 2.0, 0, 0});
  Vec3 body_reading{0, 0, g_mag};
  Vec3 got = gravity_compensate(body_reading, r90, body_reading, r0);

  Quat q = Quat::axis_angle(Vec3{1, 0, 0}, M_PI / 2.0);
  Vec3 expect = q.rotate(body_reading) - body_reading;
  CHECK(norm(got - expect) < 1e-12);
}

TEST_CASE("gravity compensation rejects non-orthonormal rotations") {
  Mat3 bad = Mat3::identity();
  bad(0, 0) = 1.5;
  CHECK_THROWS_AS((void)gravity_compensate(Vec3{}, bad, Vec3{}, Mat3::identity()),
                  Error);
}

TEST_CASE("gravity compensation is invertible") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Vec3 th{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3)};
    Vec3 th0{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3)};
    Mat3 r = ypr_rotation(th), r0 = ypr_rotation(th0);
    Vec3 a_m{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    Vec3 a_g{rng.uniform(-1, 1), rng.uniform(-1, 1), 9.8};
    Vec3 comp = gravity_compensate(a_m, r, a_g, r0);
    CHECK(norm((comp + r0 * a_g) - r * a_m) < 1e-12);
  }
}

TEST_CASE("force direction") {
  ForceDirection quiet = force_direction(Vec3{});
  CHECK(quiet.quiescent);
  CHECK(norm(quiet.phi) == 0.0);

  ForceDirection fx = force_direction(Vec3{1, 0, 0});
  CHECK_FALSE(fx.quiescent);
  CHECK(fx.phi.x == doctest::Approx(M_PI / 4.0).epsilon(1e-12));
  CHECK(fx.phi.y == 0.0);
  CHECK(fx.phi.z == 0.0);

  ForceDirection fz = force_direction(Vec3{0, 0, -2});
  CHECK(fz.phi.z == doctest::Approx(-M_PI / 4.0).epsilon(1e-12));

  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    Vec3 a{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    ForceDirection fd = force_direction(a);
    if (fd.quiescent) continue;
    for (int i = 0; i < 3; ++i) {
      CHECK(fd.phi[i] >= -M_PI / 2.0);
      CHECK(fd.phi[i] <= M_PI / 2.0);
    }
  }
}

TEST_CASE("gravity calibrator waits for a still second") {
  GravityCalibrator cal;
  ImuSample s;
  s.a_c = Vec3{0.0, 0.0, 9.8};
  // moving samples are ignored
  for (int i = 0; i < 30; ++i) {
    s.t = 0.02 * i;
    s.theta_dot_m = Vec3{0.4, 0, 0};
    cal.push(s);
  }
  CHECK_FALSE(cal.calibrated());
  CHECK_THROWS_AS((void)cal.reference(), Error);
  // one second of stillness completes the reference
  for (int i = 0; i < 60; ++i) {
    s.t = 0.6 + 0.02 * i;
    s.theta_dot_m = Vec3{};
    cal.push(s);
  }
  CHECK(cal.calibrated());
  CHECK(norm(cal.reference().a_g - Vec3{0, 0, 9.8}) < 1e-12);
}

TEST_CASE("sample validation enforces the accelerometer range") {
  ImuSample s;
  s.a_c = Vec3{200, 0, 0};
  CHECK_THROWS_AS(validate_sample(s), Error);
}
