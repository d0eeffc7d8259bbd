#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "psm/body_params.hpp"
#include "psm/config.hpp"
#include "psm/errors.hpp"
#include "psm/io.hpp"
#include "psm/linalg.hpp"
#include "psm/signal_pipeline.hpp"

namespace psm {

// Deterministic generator (xoshiro256++) so streams are reproducible across
// platforms and standard-library versions.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) {
    std::uint64_t z = seed;
    for (auto& s : state_) {
      z += 0x9e3779b97f4a7c15ULL;
      std::uint64_t x = z;
      x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
      x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
      s = x ^ (x >> 31);
    }
  }

  std::uint64_t next() {
    auto rotl = [](std::uint64_t x, int k) {
      return (x << k) | (x >> (64 - k));
    };
    std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one value per call keeps the stream order obvious.
  double gaussian(double sigma) {
    double u1 = std::max(uniform(), 1e-300);
    double u2 = uniform();
    return sigma * std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t state_[4];
};

enum class VelocityProfile { Slow, Medium, Fast };

// Peak angular velocity per profile [rad/s]; asserted by the generator tests.
inline double profile_peak_velocity(VelocityProfile p) {
  switch (p) {
    case VelocityProfile::Slow: return 0.4;
    case VelocityProfile::Medium: return 1.0;
    case VelocityProfile::Fast: return 2.0;
  }
  return 0.4;
}

inline VelocityProfile profile_from_string(const std::string& s) {
  if (s == "slow") return VelocityProfile::Slow;
  if (s == "medium") return VelocityProfile::Medium;
  if (s == "fast") return VelocityProfile::Fast;
  throw Error(ErrorCode::ConfigError, "unknown velocity profile: " + s);
}

inline const char* to_string(VelocityProfile p) {
  switch (p) {
    case VelocityProfile::Slow: return "slow";
    case VelocityProfile::Medium: return "medium";
    case VelocityProfile::Fast: return "fast";
  }
  return "slow";
}

struct Perturbation {
  bool jitter = false;
  double amplitude = 0.0;  // [rad]
  double frequency = 0.0;  // [Hz]
};

struct ScenarioSegment {
  double duration = 1.0;       // [s]
  Vec3 target{};               // waypoint orientation [rad]
  VelocityProfile profile = VelocityProfile::Slow;
  Perturbation perturb;
};

struct NoiseSpec {
  double accel_sigma = 0.03;   // [m/s^2]
  double gyro_sigma = 0.004;   // [rad/s]
  double orient_sigma = 0.002; // [rad]
};

struct SyntheticScenario {
  std::uint64_t seed = 1;
  double sample_rate = 25.0;  // [Hz]
  Vec3 start{};               // initial orientation
  std::vector<ScenarioSegment> segments;
  NoiseSpec noise;

  void validate(double nyquist_guard = 0.5) const {
    if (!(sample_rate > 0.0))
      throw Error(ErrorCode::ConfigError, "sample_rate must be positive");
    if (segments.empty())
      throw Error(ErrorCode::ConfigError, "scenario needs at least one segment");
    for (const auto& seg : segments) {
      if (!(seg.duration > 0.0))
        throw Error(ErrorCode::ConfigError, "segment durations must be positive");
      if (seg.perturb.jitter &&
          !(seg.perturb.frequency > 0.0 &&
            seg.perturb.frequency < nyquist_guard * sample_rate))
        throw Error(ErrorCode::ConfigError,
                    "jitter frequency must stay below Nyquist");
    }
  }
};

namespace detail {

// Quintic minimum-jerk blend: s(0)=0, s(1)=1, zero velocity/acceleration at
// both ends; peak of ds/du is 15/8.
inline double minjerk(double u) {
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

inline double minjerk_rate(double u) {
  return 30.0 * u * u * (1.0 - u) * (1.0 - u);
}

struct SegmentPlan {
  double t_begin = 0.0;
  double t_end = 0.0;
  double move_time = 0.0;
  Vec3 from{};
  Vec3 to{};
  Perturbation perturb;
  Vec3 jitter_phase{};
};

}  // namespace detail

// Smooth 0..1 envelope used to ramp perturbations in and out of a segment.
inline double perturb_envelope(double t_in_segment, double duration,
                               double ramp = 0.5) {
  double r = std::min(ramp, duration / 4.0);
  if (r <= 0.0) return 1.0;
  double up = std::clamp(t_in_segment / r, 0.0, 1.0);
  double down = std::clamp((duration - t_in_segment) / r, 0.0, 1.0);
  auto smooth = [](double u) { return u * u * (3.0 - 2.0 * u); };
  return smooth(up) * smooth(down);
}

// Generates a consistent (theta_m, theta_dot_m, a_c) stream: waypoints joined
// by minimum-jerk moves at the profile's peak velocity, optional band-limited
// jitter on the pose, the accelerometer reading chest acceleration plus
// gravity in the body frame, and seeded Gaussian noise on every channel.
inline std::vector<ImuSample> generate_synthetic(const SyntheticScenario& scn,
                                                 const BodyParams& params,
                                                 double sample_rate_override = 0.0) {
  double fs = sample_rate_override > 0.0 ? sample_rate_override : scn.sample_rate;
  SyntheticScenario checked = scn;
  checked.sample_rate = fs;
  checked.validate();

  DeterministicRng rng(scn.seed);

  // plan segments
  std::vector<detail::SegmentPlan> plan;
  double t0 = 0.0;
  Vec3 pose = scn.start;
  for (const auto& seg : scn.segments) {
    detail::SegmentPlan sp;
    sp.t_begin = t0;
    sp.t_end = t0 + seg.duration;
    sp.from = pose;
    sp.to = seg.target;
    double dist = norm(seg.target - pose);
    double v_peak = profile_peak_velocity(seg.profile);
    // quintic peak velocity is (15/8) * dist / T
    double need = dist > 1e-12 ? (15.0 / 8.0) * dist / v_peak : 0.0;
    sp.move_time = std::min(seg.duration, need);
    sp.perturb = seg.perturb;
    sp.jitter_phase = Vec3{rng.uniform(0.0, 2.0 * M_PI),
                           rng.uniform(0.0, 2.0 * M_PI),
                           rng.uniform(0.0, 2.0 * M_PI)};
    plan.push_back(sp);
    pose = seg.target;
    t0 = sp.t_end;
  }
  double total = t0;

  // noise-free pose and rate of the planned trajectory
  auto clean_pose = [&](double t) -> std::pair<Vec3, Vec3> {
    const detail::SegmentPlan* sp = &plan.back();
    for (const auto& s : plan)
      if (t < s.t_end) {
        sp = &s;
        break;
      }
    double local = t - sp->t_begin;
    Vec3 th, thd{};
    if (sp->move_time > 0.0 && local < sp->move_time) {
      double u = local / sp->move_time;
      Vec3 delta = sp->to - sp->from;
      th = sp->from + delta * detail::minjerk(u);
      thd = delta * (detail::minjerk_rate(u) / sp->move_time);
    } else {
      th = sp->to;
    }
    if (sp->perturb.jitter) {
      double env = perturb_envelope(local, sp->t_end - sp->t_begin);
      double ramp = std::min(0.5, (sp->t_end - sp->t_begin) / 4.0);
      // envelope derivative by central difference keeps theta/theta_dot
      // consistent without differentiating the smoothstep by hand
      double h = 1e-6;
      double envp = (perturb_envelope(local + h, sp->t_end - sp->t_begin, ramp) -
                     perturb_envelope(local - h, sp->t_end - sp->t_begin, ramp)) /
                    (2.0 * h);
      double w = 2.0 * M_PI * sp->perturb.frequency;
      for (int i = 0; i < 3; ++i) {
        double ph = w * local + sp->jitter_phase[i];
        th[i] += sp->perturb.amplitude * env * std::sin(ph);
        thd[i] += sp->perturb.amplitude *
                  (env * w * std::cos(ph) + envp * std::sin(ph));
      }
    }
    return {th, thd};
  };

  // chest position in the world frame
  auto chest = [&](double t) {
    auto [th, thd] = clean_pose(t);
    double sx = std::sin(th.x), cx = std::cos(th.x);
    double sy = std::sin(th.y), cy = std::cos(th.y);
    return Vec3{params.l_b * sy * cx, params.l_b * sx, params.l_b * cy * cx};
  };

  std::vector<ImuSample> out;
  double dt = 1.0 / fs;
  std::size_t n = static_cast<std::size_t>(std::floor(total * fs)) + 1;
  for (std::size_t k = 0; k < n; ++k) {
    double t = k * dt;
    if (t > total) break;
    auto [th, thd] = clean_pose(t);

    // world-frame chest acceleration by central difference
    double h = dt / 8.0;
    Vec3 p_minus = chest(std::max(0.0, t - h));
    Vec3 p_plus = chest(std::min(total, t + h));
    Vec3 p_mid = chest(t);
    Vec3 acc_world = (p_plus - p_mid * 2.0 + p_minus) / (h * h);

    Mat3 r = ypr_rotation(th);
    Vec3 gravity_reaction{0.0, 0.0, params.g};
    Vec3 a_body = r.transposed() * (acc_world + gravity_reaction);

    ImuSample s;
    s.t = t;
    s.theta_m = th + Vec3{rng.gaussian(scn.noise.orient_sigma),
                          rng.gaussian(scn.noise.orient_sigma),
                          rng.gaussian(scn.noise.orient_sigma)};
    s.theta_dot_m = thd + Vec3{rng.gaussian(scn.noise.gyro_sigma),
                               rng.gaussian(scn.noise.gyro_sigma),
                               rng.gaussian(scn.noise.gyro_sigma)};
    s.a_c = a_body + Vec3{rng.gaussian(scn.noise.accel_sigma),
                          rng.gaussian(scn.noise.accel_sigma),
                          rng.gaussian(scn.noise.accel_sigma)};
    out.push_back(s);
  }
  return out;
}

// True when t lies strictly inside a jitter-perturbed segment.
inline bool in_perturbed_segment(const SyntheticScenario& scn, double t) {
  double t0 = 0.0;
  for (const auto& seg : scn.segments) {
    double t1 = t0 + seg.duration;
    if (t >= t0 && t < t1) return seg.perturb.jitter;
    t0 = t1;
  }
  return false;
}

inline double scenario_duration(const SyntheticScenario& scn) {
  double total = 0.0;
  for (const auto& seg : scn.segments) total += seg.duration;
  return total;
}

// --- scenario JSON ----------------------------------------------------------

inline SyntheticScenario scenario_from_json(const nlohmann::json& j) {
  detail::reject_unknown(
      j, {"seed", "sample_rate", "start", "segments", "noise"}, "scenario");
  SyntheticScenario scn;
  scn.seed = j.value("seed", scn.seed);
  scn.sample_rate = j.value("sample_rate", scn.sample_rate);
  if (j.contains("start"))
    scn.start = detail::vec3_from_json(j["start"], "scenario.start");
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    detail::reject_unknown(n, {"accel_sigma", "gyro_sigma", "orient_sigma"},
                           "scenario.noise");
    scn.noise.accel_sigma = n.value("accel_sigma", scn.noise.accel_sigma);
    scn.noise.gyro_sigma = n.value("gyro_sigma", scn.noise.gyro_sigma);
    scn.noise.orient_sigma = n.value("orient_sigma", scn.noise.orient_sigma);
  }
  if (!j.contains("segments"))
    throw Error(ErrorCode::ConfigError, "scenario needs segments");
  for (const auto& s : j["segments"]) {
    detail::reject_unknown(
        s, {"duration", "target", "profile", "jitter_amplitude",
            "jitter_frequency"},
        "scenario.segments[]");
    ScenarioSegment seg;
    seg.duration = s.at("duration").get<double>();
    seg.target = detail::vec3_from_json(s.at("target"), "segment.target");
    seg.profile = profile_from_string(s.value("profile", std::string("slow")));
    if (s.contains("jitter_amplitude") || s.contains("jitter_frequency")) {
      seg.perturb.jitter = true;
      seg.perturb.amplitude = s.value("jitter_amplitude", 0.0);
      seg.perturb.frequency = s.value("jitter_frequency", 0.0);
    }
    scn.segments.push_back(seg);
  }
  scn.validate();
  return scn;
}

inline nlohmann::json to_json(const SyntheticScenario& scn) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& seg : scn.segments) {
    nlohmann::json s = {{"duration", seg.duration},
                        {"target", detail::to_json(seg.target)},
                        {"profile", to_string(seg.profile)}};
    if (seg.perturb.jitter) {
      s["jitter_amplitude"] = seg.perturb.amplitude;
      s["jitter_frequency"] = seg.perturb.frequency;
    }
    segs.push_back(s);
  }
  return {{"seed", scn.seed},
          {"sample_rate", scn.sample_rate},
          {"start", detail::to_json(scn.start)},
          {"segments", segs},
          {"noise",
           {{"accel_sigma", scn.noise.accel_sigma},
            {"gyro_sigma", scn.noise.gyro_sigma},
            {"orient_sigma", scn.noise.orient_sigma}}}};
}

}  // namespace psm
