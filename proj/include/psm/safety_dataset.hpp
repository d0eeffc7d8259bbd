#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "psm/body_params.hpp"
#include "psm/errors.hpp"
#include "psm/linalg.hpp"
#include "psm/signal_pipeline.hpp"

namespace psm {

constexpr double kProbabilityCap = 0.99;  // keeps (1-P)^-n estimators finite

// Geometry of the reduced (theta_g, omega) grid. The accuracy ranges
// eps_theta = 1/n_theta and eps_omega = 1/m_omega are derived, never stored.
struct GridSpec {
  double theta_g_min = -1.0;          // [rad]
  double theta_g_max = M_PI / 2.0;    // [rad]
  double omega_max = 2.5;             // [rad/s]
  int n_theta = 33;
  int m_omega = 33;

  double eps_theta() const { return 1.0 / n_theta; }
  double eps_omega() const { return 1.0 / m_omega; }
  double theta_range() const { return theta_g_max - theta_g_min; }

  void validate() const {
    if (!(theta_g_min < theta_g_max))
      throw Error(ErrorCode::InvalidArgument, "grid needs theta_g_min < theta_g_max");
    if (!(omega_max > 0.0))
      throw Error(ErrorCode::InvalidArgument, "grid needs omega_max > 0");
    if (n_theta < 2 || m_omega < 2)
      throw Error(ErrorCode::InvalidArgument, "grid needs at least 2 bins per axis");
  }

  bool operator==(const GridSpec&) const = default;
};

// Angular direction of the torso axis relative to gravity, from the piecewise
// chord construction on the reduced pendulum. On the workspace
// |tx|,|ty| < pi/2 this equals acos(cos tx cos ty) exactly.
inline double gravity_angle(double theta_x, double theta_y, double l_b) {
  double cx = std::cos(theta_x), cy = std::cos(theta_y);
  double h = l_b * (1.0 - cx * cy);
  double sx = std::sin(theta_x), sy = std::sin(theta_y);
  double l = l_b * std::sqrt(sy * sy * cx * cx + sx * sx);
  double a_c = std::sqrt(h * h + l * l);
  if (a_c < 1e-9) return 0.0;
  if (h <= l_b) {
    double ratio = std::clamp(h / a_c, -1.0, 1.0);
    return M_PI - 2.0 * std::acos(ratio);
  }
  double ratio = std::clamp((h - l_b) / l_b, -1.0, 1.0);
  return M_PI / 2.0 - std::asin(ratio);
}

struct ClippedValue {
  double value = 0.0;
  bool clipped = false;
};

// Euclidean norm of the measured angular velocity, clipped into [0, omega_max].
inline ClippedValue omega_norm(const Vec3& theta_dot_m, double omega_max) {
  double w = norm(theta_dot_m);
  if (w > omega_max) return {omega_max, true};
  return {w, false};
}

struct GridIndex {
  int n = 0;  // theta_g row
  int m = 0;  // omega column
  bool clamped = false;

  bool operator==(const GridIndex&) const = default;
};

// Nearest bin of a (theta_g, omega) pair; round half up, clamped to the grid.
inline GridIndex bin_of(double theta_g, double omega, const GridSpec& spec) {
  double n_raw = std::floor(spec.n_theta * (theta_g - spec.theta_g_min) /
                                spec.theta_range() + 0.5);
  double m_raw = std::floor(spec.m_omega * omega / spec.omega_max + 0.5);
  GridIndex idx;
  idx.n = static_cast<int>(std::clamp(n_raw, 0.0, spec.n_theta - 1.0));
  idx.m = static_cast<int>(std::clamp(m_raw, 0.0, spec.m_omega - 1.0));
  idx.clamped = (n_raw != idx.n) || (m_raw != idx.m);
  return idx;
}

// Grid-point value of a bin index (inverse of bin_of on grid points).
inline std::pair<double, double> value_of(int n, int m, const GridSpec& spec) {
  if (n < 0 || n >= spec.n_theta || m < 0 || m >= spec.m_omega)
    throw Error(ErrorCode::IndexOutOfGrid, "bin index outside the grid");
  double theta_g = spec.theta_range() * n / spec.n_theta + spec.theta_g_min;
  double omega = spec.omega_max * m / spec.m_omega;
  return {theta_g, omega};
}

struct DatasetMeta {
  std::vector<std::string> recordings;
  std::string tool;
  std::int64_t build_unix = 0;
  bool smoothed = true;
};

// The reduced-dimension probability grid. Immutable once built; concurrent
// read-only lookups are safe.
struct SafetyDataset {
  GridSpec spec;
  std::vector<std::vector<double>> P;          // n_theta x m_omega in [0, cap]
  std::vector<std::vector<std::int64_t>> counts;
  DatasetMeta meta;

  double lookup(double theta_g, double omega) const {
    GridIndex idx = bin_of(theta_g, omega, spec);
    return P[idx.n][idx.m];
  }

  double at(int n, int m) const {
    if (n < 0 || n >= spec.n_theta || m < 0 || m >= spec.m_omega)
      throw Error(ErrorCode::IndexOutOfGrid, "bin index outside the grid");
    return P[n][m];
  }

  void validate() const {
    spec.validate();
    if (static_cast<int>(P.size()) != spec.n_theta ||
        static_cast<int>(counts.size()) != spec.n_theta)
      throw Error(ErrorCode::InvalidArgument, "dataset row count mismatch");
    for (int n = 0; n < spec.n_theta; ++n) {
      if (static_cast<int>(P[n].size()) != spec.m_omega ||
          static_cast<int>(counts[n].size()) != spec.m_omega)
        throw Error(ErrorCode::InvalidArgument, "dataset column count mismatch");
      for (int m = 0; m < spec.m_omega; ++m) {
        if (!(P[n][m] >= 0.0 && P[n][m] <= kProbabilityCap))
          throw Error(ErrorCode::InvalidArgument, "probability outside [0, cap]");
        if (counts[n][m] < 0)
          throw Error(ErrorCode::InvalidArgument, "negative visit count");
        if (counts[n][m] == 0 && P[n][m] != 0.0)
          throw Error(ErrorCode::InvalidArgument, "nonzero P on unvisited cell");
      }
    }
  }
};

struct BuildOptions {
  bool smooth = true;  // one 3x3 box-blur pass over the normalized grid
  DatasetMeta meta;
};

// Builds the probability grid from recorded streams. Counts are normalized
// by the maximum cell so the most-practiced motion approaches the cap; the
// optional blur spreads mass across the visited support (unvisited cells
// stay at exactly zero) and is renormalized back to the cap.
inline SafetyDataset build_dataset(
    const std::vector<std::vector<ImuSample>>& recordings,
    const GridSpec& spec, const BodyParams& params,
    const BuildOptions& options = {}) {
  spec.validate();
  if (recordings.empty())
    throw Error(ErrorCode::EmptyRecordings, "need at least one recording");

  SafetyDataset ds;
  ds.spec = spec;
  ds.meta = options.meta;
  ds.meta.smoothed = options.smooth;
  ds.counts.assign(spec.n_theta, std::vector<std::int64_t>(spec.m_omega, 0));
  ds.P.assign(spec.n_theta, std::vector<double>(spec.m_omega, 0.0));

  for (const auto& rec : recordings) {
    for (const ImuSample& s : rec) {
      validate_sample(s);
      double tg = gravity_angle(s.theta_m.x, s.theta_m.y, params.l_b);
      double w = omega_norm(s.theta_dot_m, spec.omega_max).value;
      GridIndex idx = bin_of(tg, w, spec);
      ++ds.counts[idx.n][idx.m];
    }
  }

  std::int64_t max_count = 0;
  for (const auto& row : ds.counts)
    for (std::int64_t c : row) max_count = std::max(max_count, c);
  if (max_count == 0) return ds;

  for (int n = 0; n < spec.n_theta; ++n)
    for (int m = 0; m < spec.m_omega; ++m)
      ds.P[n][m] = std::min(
          static_cast<double>(ds.counts[n][m]) / static_cast<double>(max_count),
          kProbabilityCap);

  if (options.smooth) {
    std::vector<std::vector<double>> blurred(
        spec.n_theta, std::vector<double>(spec.m_omega, 0.0));
    for (int n = 0; n < spec.n_theta; ++n) {
      for (int m = 0; m < spec.m_omega; ++m) {
        if (ds.counts[n][m] == 0) continue;  // unvisited cells stay empty
        double sum = 0.0;
        int cells = 0;
        for (int dn = -1; dn <= 1; ++dn) {
          for (int dm = -1; dm <= 1; ++dm) {
            int nn = n + dn, mm = m + dm;
            if (nn < 0 || nn >= spec.n_theta || mm < 0 || mm >= spec.m_omega)
              continue;
            sum += ds.P[nn][mm];
            ++cells;
          }
        }
        blurred[n][m] = sum / cells;
      }
    }
    double max_blur = 0.0;
    for (const auto& row : blurred)
      for (double v : row) max_blur = std::max(max_blur, v);
    if (max_blur > 0.0) {
      double scale = kProbabilityCap / max_blur;
      for (auto& row : blurred)
        for (double& v : row) v = std::min(v * scale, kProbabilityCap);
    }
    ds.P = std::move(blurred);
  }

  ds.validate();
  return ds;
}

// --- versioned JSON persistence -------------------------------------------

inline nlohmann::json to_json(const GridSpec& spec) {
  return {{"theta_g_min", spec.theta_g_min},
          {"theta_g_max", spec.theta_g_max},
          {"omega_max", spec.omega_max},
          {"n_theta", spec.n_theta},
          {"m_omega", spec.m_omega}};
}

inline GridSpec grid_spec_from_json(const nlohmann::json& j);

inline nlohmann::json to_json(const SafetyDataset& ds) {
  nlohmann::json meta = {{"recordings", ds.meta.recordings},
                         {"tool", ds.meta.tool},
                         {"build_unix", ds.meta.build_unix},
                         {"smoothed", ds.meta.smoothed}};
  return {{"version", 1},
          {"spec", to_json(ds.spec)},
          {"P", ds.P},
          {"counts", ds.counts},
          {"meta", meta}};
}

inline SafetyDataset dataset_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("version") || j["version"] != 1)
    throw Error(ErrorCode::ConfigError, "unsupported dataset version");
  SafetyDataset ds;
  ds.spec = grid_spec_from_json(j.at("spec"));
  ds.P = j.at("P").get<std::vector<std::vector<double>>>();
  ds.counts = j.at("counts").get<std::vector<std::vector<std::int64_t>>>();
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    ds.meta.recordings = m.value("recordings", std::vector<std::string>{});
    ds.meta.tool = m.value("tool", std::string{});
    ds.meta.build_unix = m.value("build_unix", std::int64_t{0});
    ds.meta.smoothed = m.value("smoothed", true);
  }
  ds.validate();
  return ds;
}

inline GridSpec grid_spec_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "theta_g_min", "theta_g_max", "omega_max", "n_theta", "m_omega"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw Error(ErrorCode::ConfigError, "unknown grid key: " + it.key());
  GridSpec spec;
  spec.theta_g_min = j.value("theta_g_min", spec.theta_g_min);
  spec.theta_g_max = j.value("theta_g_max", spec.theta_g_max);
  spec.omega_max = j.value("omega_max", spec.omega_max);
  spec.n_theta = j.value("n_theta", spec.n_theta);
  spec.m_omega = j.value("m_omega", spec.m_omega);
  spec.validate();
  return spec;
}

}  // namespace psm
