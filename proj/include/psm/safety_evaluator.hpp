#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "psm/errors.hpp"
#include "psm/linalg.hpp"

namespace psm {

enum class SafetyLevel { High, Medium, Low };

inline const char* to_string(SafetyLevel s) {
  switch (s) {
    case SafetyLevel::High: return "High";
    case SafetyLevel::Medium: return "Medium";
    case SafetyLevel::Low: return "Low";
  }
  return "?";
}

// Frequency-domain scoring configuration. The spectral score of a window is
// the band mean of the one-sided amplitude spectrum divided by lambda; see
// FORMATS.md for the exact normalization.
struct EvalSpec {
  std::size_t window_len = 64;  // samples, power of two
  double lambda_m = 1.4;        // lower band edge [Hz]
  double lambda = 2.6;          // upper band edge [Hz]
  double eps_em = 0.022;        // High/Medium threshold
  double eps_ec = 0.035;        // Medium/Low threshold
  double n_norm = 1.0;          // deviation normalization count

  void validate() const {
    if (window_len < 2 || (window_len & (window_len - 1)) != 0)
      throw Error(ErrorCode::InvalidArgument, "window_len must be a power of two");
    if (!(lambda_m >= 0.0 && lambda_m < lambda))
      throw Error(ErrorCode::InvalidArgument, "need 0 <= lambda_m < lambda");
    if (!(eps_em < eps_ec))
      throw Error(ErrorCode::InvalidArgument, "need eps_em < eps_ec");
    if (!(n_norm >= 1.0))
      throw Error(ErrorCode::InvalidArgument, "n_norm must be >= 1");
  }
};

// Scaled deviation e_q = (1/n^2) |q - q_m| for either the orientation or the
// angular-velocity channel.
inline double deviation(const Vec3& q, const Vec3& q_m, double n_norm) {
  if (n_norm < 1.0)
    throw Error(ErrorCode::InvalidArgument, "n_norm must be >= 1");
  return norm(q - q_m) / (n_norm * n_norm);
}

// One-sided amplitude spectrum of a real window (mean retained): bin 0 and
// the Nyquist bin carry |S_j|/W, interior bins 2|S_j|/W, so a pure in-bin
// tone of amplitude A shows up as A.
inline std::vector<double> amplitude_spectrum(const std::vector<double>& w) {
  std::size_t n = w.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t j = 0; j <= n / 2; ++j) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double ang = 2.0 * M_PI * static_cast<double>(i * j % n) / n;
      re += w[i] * std::cos(ang);
      im -= w[i] * std::sin(ang);
    }
    double mag = std::sqrt(re * re + im * im);
    out[j] = (j == 0 || 2 * j == n) ? mag / n : 2.0 * mag / n;
  }
  return out;
}

// Mean in-band spectral magnitude scaled by 1/lambda.
inline double spectral_score(const std::vector<double>& e_window,
                             const EvalSpec& spec, double sample_rate) {
  spec.validate();
  if (e_window.size() != spec.window_len)
    throw Error(ErrorCode::WindowNotFull, "window length mismatch");
  if (!(sample_rate > 0.0))
    throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");

  std::vector<double> spectrum = amplitude_spectrum(e_window);
  double bin_hz = sample_rate / static_cast<double>(spec.window_len);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < spectrum.size(); ++j) {
    double f = bin_hz * static_cast<double>(j);
    if (f >= spec.lambda_m && f <= spec.lambda) {
      sum += spectrum[j];
      ++count;
    }
  }
  if (count == 0)
    throw Error(ErrorCode::InvalidArgument,
                "no spectral bins inside [lambda_m, lambda]");
  return (sum / static_cast<double>(count)) / spec.lambda;
}

// Worst channel governs: High only while both scores stay at or below
// eps_em; beyond eps_ec the window is Low.
inline SafetyLevel classify(double e_m_theta, double e_m_omega,
                            const EvalSpec& spec) {
  double score = std::max(e_m_theta, e_m_omega);
  if (score <= spec.eps_em) return SafetyLevel::High;
  if (score <= spec.eps_ec) return SafetyLevel::Medium;
  return SafetyLevel::Low;
}

// Per-window output record.
struct SafetyReport {
  double t = 0.0;          // window end time
  double e_theta = 0.0;    // time-domain RMS of the orientation deviation
  double e_omega = 0.0;    // time-domain RMS of the velocity deviation
  double e_m_theta = 0.0;  // spectral scores
  double e_m_omega = 0.0;
  SafetyLevel level = SafetyLevel::High;
  bool guard_flagged = false;  // any hard guard inside the window
};

// Rectangular windows with 50% overlap over the per-sample deviation pair.
class WindowedEvaluator {
 public:
  WindowedEvaluator(const EvalSpec& spec, double sample_rate)
      : spec_(spec), sample_rate_(sample_rate) {
    spec_.validate();
  }

  const EvalSpec& spec() const { return spec_; }

  // Feed one sample worth of deviations; returns a report every hop once the
  // first window fills.
  std::optional<SafetyReport> push(double t, double e_theta, double e_omega,
                                   bool guard = false) {
    ts_.push_back(t);
    e_t_.push_back(e_theta);
    e_w_.push_back(e_omega);
    guards_.push_back(guard);
    if (e_t_.size() > spec_.window_len) {
      ts_.pop_front();
      e_t_.pop_front();
      e_w_.pop_front();
      guards_.pop_front();
    }
    if (e_t_.size() < spec_.window_len) return std::nullopt;
    if (primed_) {
      ++since_last_;
      if (since_last_ < hop()) return std::nullopt;
      since_last_ = 0;
    } else {
      primed_ = true;
    }
    return evaluate();
  }

  std::size_t hop() const { return spec_.window_len / 2; }

 private:
  SafetyReport evaluate() const {
    std::vector<double> wt(e_t_.begin(), e_t_.end());
    std::vector<double> ww(e_w_.begin(), e_w_.end());
    SafetyReport r;
    r.t = ts_.back();
    double st = 0.0, sw = 0.0;
    for (std::size_t i = 0; i < wt.size(); ++i) {
      st += wt[i] * wt[i];
      sw += ww[i] * ww[i];
    }
    r.e_theta = std::sqrt(st / wt.size());
    r.e_omega = std::sqrt(sw / ww.size());
    r.e_m_theta = spectral_score(wt, spec_, sample_rate_);
    r.e_m_omega = spectral_score(ww, spec_, sample_rate_);
    r.level = classify(r.e_m_theta, r.e_m_omega, spec_);
    for (bool g : guards_) r.guard_flagged = r.guard_flagged || g;
    return r;
  }

  EvalSpec spec_;
  double sample_rate_;
  std::deque<double> ts_, e_t_, e_w_;
  std::deque<bool> guards_;
  bool primed_ = false;
  std::size_t since_last_ = 0;
};

}  // namespace psm
