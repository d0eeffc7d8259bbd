#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

#include "psm/butterworth.hpp"
#include "psm/errors.hpp"
#include "psm/linalg.hpp"

namespace psm {

// One timestamped IMU measurement: fused orientation, bias-free angular
// velocity, raw body-frame acceleration.
struct ImuSample {
  double t = 0.0;       // [s], strictly increasing within a stream
  Vec3 theta_m{};       // fused orientation, yaw-pitch-roll [rad]
  Vec3 theta_dot_m{};   // angular velocity [rad/s]
  Vec3 a_c{};           // raw acceleration [m/s^2]
};

constexpr double kAccelSanityBound = 160.0;  // 16 g sensor range

inline void validate_sample(const ImuSample& s) {
  if (!std::isfinite(s.t) || !all_finite(s.theta_m) ||
      !all_finite(s.theta_dot_m) || !all_finite(s.a_c))
    throw Error(ErrorCode::InvalidArgument, "non-finite IMU sample");
  if (norm(s.a_c) >= kAccelSanityBound)
    throw Error(ErrorCode::InvalidArgument,
                "acceleration exceeds the 16 g sensor bound");
}

// Zero-phase low-pass configuration. n_f counts the net order of the
// forward-backward pass, so each pass runs at order n_f/2 (hence even n_f).
struct FilterSpec {
  int n_f = 12;
  double f_c = 0.42;  // cutoff as a fraction of Nyquist

  void validate() const {
    if (n_f < 2 || n_f % 2 != 0)
      throw Error(ErrorCode::InvalidArgument, "filter order n_f must be even and >= 2");
    if (!(f_c > 0.0 && f_c < 1.0))
      throw Error(ErrorCode::InvalidArgument, "cutoff ratio f_c must be in (0,1)");
  }
};

// Offline zero-phase filtering of a 3-vector series, component-wise.
// Requires at least 3*n_f samples for the edge padding.
inline std::vector<Vec3> zero_phase_lowpass(const std::vector<Vec3>& series,
                                            const FilterSpec& spec) {
  spec.validate();
  std::size_t min_len = static_cast<std::size_t>(3 * spec.n_f);
  if (series.size() < min_len)
    throw Error(ErrorCode::SeriesTooShort,
                "zero-phase filtering needs at least 3*n_f samples");
  ButterworthLowpass f(spec.n_f / 2, spec.f_c);
  std::size_t pad = min_len;
  std::vector<Vec3> out(series.size());
  for (std::size_t axis = 0; axis < 3; ++axis) {
    std::vector<double> chan(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) chan[i] = series[i][axis];
    chan = filtfilt(f, chan, pad);
    for (std::size_t i = 0; i < series.size(); ++i) out[i][axis] = chan[i];
  }
  return out;
}

// Scalar overload used by tests.
inline std::vector<double> zero_phase_lowpass(const std::vector<double>& series,
                                              const FilterSpec& spec) {
  spec.validate();
  std::size_t min_len = static_cast<std::size_t>(3 * spec.n_f);
  if (series.size() < min_len)
    throw Error(ErrorCode::SeriesTooShort,
                "zero-phase filtering needs at least 3*n_f samples");
  ButterworthLowpass f(spec.n_f / 2, spec.f_c);
  return filtfilt(f, series, min_len);
}

// Sliding-window zero-phase filter for live streams. Each push() returns the
// window-center sample of the zero-phase result once the window is full, so
// the emitted value lags the input by window/2 samples.
class StreamingLowpass {
 public:
  StreamingLowpass(const FilterSpec& spec, std::size_t window = 128)
      : spec_(spec), window_(window), filter_(spec.n_f / 2, spec.f_c) {
    spec_.validate();
    if (window_ < static_cast<std::size_t>(3 * spec_.n_f))
      throw Error(ErrorCode::InvalidArgument,
                  "streaming window must hold at least 3*n_f samples");
  }

  std::size_t latency_samples() const { return window_ / 2; }
  std::size_t window() const { return window_; }

  std::optional<Vec3> push(const Vec3& v) {
    buf_.push_back(v);
    if (buf_.size() > window_) buf_.pop_front();
    if (buf_.size() < window_) return std::nullopt;
    std::size_t pad = static_cast<std::size_t>(3 * spec_.n_f);
    chan_.resize(window_);
    filtered_.resize(window_);
    Vec3 out;
    for (std::size_t axis = 0; axis < 3; ++axis) {
      for (std::size_t i = 0; i < window_; ++i) chan_[i] = buf_[i][axis];
      filtfilt_windowed(filter_, chan_.data(), window_, pad, scratch_,
                        filtered_.data());
      out[axis] = filtered_[window_ - 1 - latency_samples()];
    }
    return out;
  }

 private:
  FilterSpec spec_;
  std::size_t window_;
  ButterworthLowpass filter_;
  std::deque<Vec3> buf_;
  std::vector<double> chan_, filtered_, scratch_;
};

// Gravity reference captured during an initial stillness window.
struct GravityReference {
  Vec3 a_g{};       // mean body-frame acceleration while still
  Vec3 theta_0{};   // mean orientation over the same window
  double t_0 = 0.0; // end of the calibration window
};

// Accumulates the first `still_duration` seconds of samples whose gyro norm
// stays below `gyro_eps`. Samples that move reset nothing; they are simply
// not counted. Calibration completes once the still span is covered.
class GravityCalibrator {
 public:
  GravityCalibrator(double still_duration = 1.0, double gyro_eps = 0.05)
      : still_duration_(still_duration), gyro_eps_(gyro_eps) {}

  bool calibrated() const { return calibrated_; }

  const GravityReference& reference() const {
    if (!calibrated_)
      throw Error(ErrorCode::NotCalibrated,
                  "no stillness window has produced a gravity reference");
    return ref_;
  }

  void push(const ImuSample& s) {
    if (calibrated_) return;
    if (norm(s.theta_dot_m) >= gyro_eps_) return;
    if (count_ == 0) first_t_ = s.t;
    sum_a_ += s.a_c;
    sum_theta_ += s.theta_m;
    last_t_ = s.t;
    ++count_;
    if (count_ >= 2 && last_t_ - first_t_ >= still_duration_) {
      ref_.a_g = sum_a_ / static_cast<double>(count_);
      ref_.theta_0 = sum_theta_ / static_cast<double>(count_);
      ref_.t_0 = last_t_;
      calibrated_ = true;
    }
  }

 private:
  double still_duration_;
  double gyro_eps_;
  Vec3 sum_a_{};
  Vec3 sum_theta_{};
  double first_t_ = 0.0, last_t_ = 0.0;
  std::size_t count_ = 0;
  GravityReference ref_;
  bool calibrated_ = false;
};

// World-frame acceleration with the calibrated gravity reference removed:
//   a_mg = R(t) a_m - R(t0) a_g
inline Vec3 gravity_compensate(const Vec3& a_m, const Mat3& r_t,
                               const Vec3& a_g, const Mat3& r_t0) {
  if (orthonormality_defect(r_t) > 1e-6 || orthonormality_defect(r_t0) > 1e-6)
    throw Error(ErrorCode::InvalidArgument, "rotation matrices must be orthonormal");
  return r_t * a_m - r_t0 * a_g;
}

constexpr double kQuiescenceThreshold = 0.05;  // [m/s^2]

struct ForceDirection {
  Vec3 phi{};             // per-axis angular direction of exerted force [rad]
  bool quiescent = false; // true when |a_mg| fell below the threshold
};

// phi_i = atan2(a_i, |a|). The atan2 form keeps quadrants sane where the
// plain fraction would; components stay within [-pi/4, pi/4] because the
// norm bounds each component.
inline ForceDirection force_direction(const Vec3& a_mg,
                                      double eps = kQuiescenceThreshold) {
  double n = norm(a_mg);
  if (n < eps) return {Vec3{}, true};
  return {Vec3{std::atan2(a_mg.x, n), std::atan2(a_mg.y, n),
               std::atan2(a_mg.z, n)},
          false};
}

}  // namespace psm
