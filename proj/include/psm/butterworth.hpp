#pragma once

#include <cmath>
#include <algorithm>
#include <complex>
#include <cstddef>
#include <vector>

#include "psm/errors.hpp"

namespace psm {

// Second-order IIR section, direct form II transposed.
struct Biquad {
  // y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

// Lowpass Butterworth of the given order with cutoff expressed as a fraction
// of Nyquist, realized as a cascade of biquads (plus one first-order section
// when the order is odd). Analog prototype poles, bilinear transform with
// prewarped cutoff, unity DC gain per section.
class ButterworthLowpass {
 public:
  ButterworthLowpass(int order, double cutoff_ratio) : order_(order) {
    if (order < 1)
      throw Error(ErrorCode::InvalidArgument, "filter order must be positive");
    if (!(cutoff_ratio > 0.0 && cutoff_ratio < 1.0))
      throw Error(ErrorCode::InvalidArgument, "cutoff ratio must be in (0,1)");
    cutoff_ratio_ = cutoff_ratio;
    double warped = std::tan(M_PI * cutoff_ratio / 2.0);
    int pairs = order / 2;
    for (int k = 1; k <= pairs; ++k) {
      double phi = M_PI / 2.0 + M_PI * (2.0 * k - 1.0) / (2.0 * order);
      std::complex<double> pole =
          warped * std::complex<double>(std::cos(phi), std::sin(phi));
      std::complex<double> zp = (1.0 + pole) / (1.0 - pole);
      Biquad s;
      s.a1 = -2.0 * zp.real();
      s.a2 = std::norm(zp);
      double g = (1.0 + s.a1 + s.a2) / 4.0;  // H(1) = 1
      s.b0 = g;
      s.b1 = 2.0 * g;
      s.b2 = g;
      sections_.push_back(s);
    }
    if (order % 2 == 1) {
      double pole = -warped;  // real prototype pole
      double zp = (1.0 + pole) / (1.0 - pole);
      Biquad s;
      s.a1 = -zp;
      s.a2 = 0.0;
      double g = (1.0 + s.a1) / 2.0;
      s.b0 = g;
      s.b1 = g;
      s.b2 = 0.0;
      sections_.push_back(s);
    }
  }

  int order() const { return order_; }
  const std::vector<Biquad>& sections() const { return sections_; }

  // Squared magnitude response at digital frequency omega (rad/sample).
  // Closed form for a bilinear-designed Butterworth; used as the analytic
  // oracle by the filter tests.
  double magnitude_squared(double omega) const {
    double r = std::tan(omega / 2.0) / std::tan(M_PI * cutoff_ratio_ / 2.0);
    return 1.0 / (1.0 + std::pow(r, 2.0 * order_));
  }

  // Single causal pass, in place. Section states start at the steady-state
  // response to the first sample, so a constant series passes unchanged.
  void filter_inplace(std::vector<double>& y) const {
    if (y.empty()) return;
    for (const Biquad& s : sections_) {
      double g = s.dc_gain();
      double u0 = y.front();
      double s1 = (g - s.b0) * u0;
      double s2 = (s.b2 - s.a2 * g) * u0;
      for (double& v : y) {
        double in = v;
        double out = s.b0 * in + s1;
        s1 = s.b1 * in - s.a1 * out + s2;
        s2 = s.b2 * in - s.a2 * out;
        v = out;
      }
    }
  }

  std::vector<double> filter_once(const std::vector<double>& x) const {
    std::vector<double> y = x;
    filter_inplace(y);
    return y;
  }

 private:
  int order_;
  double cutoff_ratio_;
  std::vector<Biquad> sections_;
};

// Forward-backward (zero phase) filtering over a caller-provided padded
// buffer; scratch holds the odd-reflection extension and is reused across
// calls. Writes the result for the original span back into `out`.
inline void filtfilt_windowed(const ButterworthLowpass& f,
                              const double* x, std::size_t n, std::size_t pad,
                              std::vector<double>& scratch, double* out) {
  pad = std::min(pad, n - 1);
  scratch.resize(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i)
    scratch[i] = 2.0 * x[0] - x[pad - i];
  for (std::size_t i = 0; i < n; ++i) scratch[pad + i] = x[i];
  for (std::size_t i = 0; i < pad; ++i)
    scratch[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  f.filter_inplace(scratch);
  std::reverse(scratch.begin(), scratch.end());
  f.filter_inplace(scratch);
  std::reverse(scratch.begin(), scratch.end());
  for (std::size_t i = 0; i < n; ++i) out[i] = scratch[pad + i];
}

// Zero-phase filtering of a whole series. The effective amplitude response
// is the squared magnitude of the single pass. `pad` is clipped to len-1.
inline std::vector<double> filtfilt(const ButterworthLowpass& f,
                                    const std::vector<double>& x,
                                    std::size_t pad) {
  if (x.size() < 2)
    throw Error(ErrorCode::SeriesTooShort, "filtfilt needs at least 2 samples");
  std::vector<double> out(x.size());
  std::vector<double> scratch;
  filtfilt_windowed(f, x.data(), x.size(), pad, scratch, out.data());
  return out;
}

}  // namespace psm
