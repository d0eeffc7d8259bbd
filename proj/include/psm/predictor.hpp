#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "psm/body_params.hpp"
#include "psm/dynamics.hpp"
#include "psm/errors.hpp"
#include "psm/linalg.hpp"
#include "psm/safety_dataset.hpp"

namespace psm {

// The one-step prediction written in the update equations collapses to the
// current sample (previous value plus the last increment); the one-step-ahead
// variant applies the same increment forward. Both are available; ahead is
// the default.
enum class PredictionMode { OneStepAhead, Printed };

struct PredictorOptions {
  PredictionMode mode = PredictionMode::OneStepAhead;
  double eps_p = 0.02;    // fallback threshold on the 2x2 window
  double eps_den = 1e-3;  // magnitude floor for the gain denominators
  double k_s_cap = 2e4;   // cap on the estimated stiffness addition [N m/rad]
  // Damping cap: 250 already glues the rate to the measurement within a few
  // milliseconds; anything stiffer only multiplies the substep count.
  double b_s_cap = 250.0;  // [N m s/rad]
  // Integrator stability: substeps keep |rate * h| below this margin.
  double stability_margin = 0.8;
  int max_substeps = 4096;
  DivergenceBounds bounds;

  void validate() const {
    if (!(eps_p >= 0.0 && eps_p < 1.0))
      throw Error(ErrorCode::InvalidArgument, "eps_p must be in [0, 1)");
    if (!(eps_den > 0.0))
      throw Error(ErrorCode::InvalidArgument, "eps_den must be positive");
    if (k_s_cap < 0.0 || b_s_cap < 0.0)
      throw Error(ErrorCode::InvalidArgument, "gain caps must be nonnegative");
    if (!(stability_margin > 0.0 && stability_margin <= 2.5))
      throw Error(ErrorCode::InvalidArgument,
                  "stability_margin must be in (0, 2.5]");
    if (max_substeps < 1)
      throw Error(ErrorCode::InvalidArgument, "max_substeps must be >= 1");
  }
};

// Hard guards signal measurements outside the modeled envelope; advisories
// record the formula-level clamps that fire in routine operation.
struct StepFlags {
  // guards
  bool omega_clipped = false;
  bool measured_bin_clamped = false;
  // advisories
  bool predicted_index_clamped = false;
  bool safe_window_clamped = false;
  bool fallback_taken = false;
  bool denominator_floored_theta = false;
  bool denominator_floored_omega = false;
  bool gain_clamped_negative = false;
  bool gain_capped = false;
  bool quiescent_force = false;
  bool degenerate_length = false;
  bool workspace_exceeded = false;  // pendulum left |tx|,|ty| < pi/2

  bool any_guard() const {
    return omega_clipped || measured_bin_clamped || workspace_exceeded;
  }
};

// Carry-over between samples of one stream.
struct PredictorState {
  bool has_prev = false;
  double prev_theta_g = 0.0;  // theta_g at k-1
  double prev_omega = 0.0;    // omega at k-1
  double safe_theta_g = 0.0;  // predicted safe pair carried for the fallback
  double safe_omega = 0.0;
  double safe_prob = 0.0;     // probability of that pair
};

// Every intermediate of one estimation step, retained for logging and the
// golden-trace tests.
struct EstimatedVars {
  double theta_g = 0.0;        // measured gravity angle
  double omega = 0.0;          // measured velocity norm (clipped)
  double p_current = 0.0;      // P_k
  double theta_g_pred = 0.0;   // predicted pair fed to the safe search
  double omega_pred = 0.0;
  double p_pred = 0.0;         // predicted probability (see FORMATS.md)
  double p_safe = 0.0;         // probability of the safe candidate
  double safe_theta_g = 0.0;   // safe candidate pair
  double safe_omega = 0.0;
  double theta_g_hat = 0.0;    // corrected targets
  double omega_hat = 0.0;
  double f_hat = 0.0;          // estimated force [N]
  double k_s = 0.0;            // estimated stiffness addition
  double b_s = 0.0;            // estimated damping addition
  Vec3 k_hat{};                // K_c + k_s
  Vec3 b_hat{};                // B_c + b_s
  Vec3 tau_hat{};              // estimated torque
  StepFlags flags;
};

// Preprocessed inputs for one step: fused orientation and rate straight from
// the IMU, plus the filtered, gravity-compensated acceleration and its
// direction from the signal pipeline.
struct ProcessedSample {
  double t = 0.0;
  Vec3 theta_m{};
  Vec3 theta_dot_m{};
  Vec3 a_mg{};
  Vec3 phi{};
  bool quiescent = false;
};

// (theta_tilde, omega_tilde) from the last increment.
inline std::pair<double, double> predict_pair(const PredictorState& state,
                                              double theta_g_k, double omega_k,
                                              PredictionMode mode) {
  if (!state.has_prev) return {theta_g_k, omega_k};
  double d_theta = theta_g_k - state.prev_theta_g;
  double d_omega = omega_k - state.prev_omega;
  if (mode == PredictionMode::Printed) {
    return {state.prev_theta_g + d_theta, state.prev_omega + d_omega};
  }
  return {theta_g_k + d_theta, omega_k + d_omega};
}

namespace detail {

inline int clamp_index(double raw, int count, bool* clamped) {
  double c = std::clamp(raw, 0.0, count - 1.0);
  if (clamped && c != raw) *clamped = true;
  return static_cast<int>(c);
}

}  // namespace detail

// Probability of the predicted motion. The row/column use ceil for a
// positive increment and floor otherwise, applied to the raw update value
// scaled by bins-per-range (no origin shift; this quantity is logged, not
// fed back into the estimates). Indices clamp to the grid.
inline double predicted_probability(const SafetyDataset& ds,
                                    const PredictorState& state,
                                    double theta_g_k, double omega_k,
                                    bool* clamped = nullptr) {
  const GridSpec& spec = ds.spec;
  double prev_t = state.has_prev ? state.prev_theta_g : theta_g_k;
  double prev_w = state.has_prev ? state.prev_omega : omega_k;
  double d_theta = theta_g_k - prev_t;
  double d_omega = omega_k - prev_w;
  double val_t = prev_t + d_theta;
  double val_w = prev_w + d_omega;
  double n_raw = val_t * spec.n_theta / spec.theta_range();
  double m_raw = val_w * spec.m_omega / spec.omega_max;
  double n_sel = d_theta > 0.0 ? std::ceil(n_raw) : std::floor(n_raw);
  double m_sel = d_omega > 0.0 ? std::ceil(m_raw) : std::floor(m_raw);
  int n = detail::clamp_index(n_sel, spec.n_theta, clamped);
  int m = detail::clamp_index(m_sel, spec.m_omega, clamped);
  return ds.P[n][m];
}

struct SafeCandidate {
  double prob = 0.0;
  double theta_g = 0.0;
  double omega = 0.0;
  bool fallback = false;
  bool clamped = false;
};

// Highest-probability cell of the 2x2 floor/ceil neighborhood of the
// predicted pair. Ties prefer the lower-omega column, then the lower-theta_g
// row. When the whole window is at or below eps_p the previous safe pair is
// advanced by the measured increments instead and keeps its probability.
inline SafeCandidate safe_candidate(const SafetyDataset& ds,
                                    double theta_g_tilde, double omega_tilde,
                                    const PredictorState& state,
                                    double d_theta, double d_omega,
                                    double eps_p) {
  const GridSpec& spec = ds.spec;
  double u = (theta_g_tilde - spec.theta_g_min) * spec.n_theta / spec.theta_range();
  double v = omega_tilde * spec.m_omega / spec.omega_max;

  SafeCandidate out;
  int rows[2] = {detail::clamp_index(std::floor(u), spec.n_theta, &out.clamped),
                 detail::clamp_index(std::ceil(u), spec.n_theta, &out.clamped)};
  int cols[2] = {detail::clamp_index(std::floor(v), spec.m_omega, &out.clamped),
                 detail::clamp_index(std::ceil(v), spec.m_omega, &out.clamped)};

  // Ascending (omega, theta_g) visit order plus strict improvement makes
  // lower-omega, then lower-theta_g candidates win ties.
  double best = -1.0;
  int best_n = rows[0], best_m = cols[0];
  for (int m : {std::min(cols[0], cols[1]), std::max(cols[0], cols[1])}) {
    for (int n : {std::min(rows[0], rows[1]), std::max(rows[0], rows[1])}) {
      double p = ds.P[n][m];
      if (p > best) {
        best = p;
        best_n = n;
        best_m = m;
      }
    }
  }

  if (best <= eps_p) {
    out.fallback = true;
    out.prob = state.safe_prob;
    out.theta_g = state.safe_theta_g + d_theta;
    out.omega = state.safe_omega + d_omega;
    return out;
  }
  auto [tg, w] = value_of(best_n, best_m, spec);
  out.prob = best;
  out.theta_g = tg;
  out.omega = w;
  return out;
}

// Corrected targets: the prediction pulled back by the deviation of the
// measurement from the safe path.
inline std::pair<double, double> estimate_targets(double theta_g_tilde,
                                                  double omega_tilde,
                                                  double theta_g_k,
                                                  double omega_k,
                                                  const SafeCandidate& safe) {
  double theta_hat = theta_g_tilde - (theta_g_k - safe.theta_g);
  double omega_hat = omega_tilde - (omega_k - safe.omega);
  return {theta_hat, omega_hat};
}

// Force on the reduced one-axis pendulum that explains the velocity change
// toward the safe pair plus the gravity component at the safe angle.
inline double estimate_force(const BodyParams& p, double omega_hat,
                             double omega_safe, double theta_gs) {
  return (1.0 / p.l_b) *
         ((1.0 / p.T) * (p.J_bs + p.m_b * p.l_b * p.l_b) *
              (omega_hat - omega_safe) +
          p.m_b * p.g * p.l_b * std::sin(theta_gs));
}

struct GainEstimate {
  double k_s = 0.0;
  double b_s = 0.0;
  Vec3 k_hat{};
  Vec3 b_hat{};
  bool floored_theta = false;
  bool floored_omega = false;
  bool clamped_negative = false;
  bool capped = false;
};

// Estimated stiffness/damping additions. Denominators are floored in
// magnitude (sign preserved), negative additions clamp to zero, and both
// additions cap so the explicit integrator stays within its stability
// budget.
inline GainEstimate estimate_gains(double f_hat, double theta_g_hat,
                                   double omega_hat, double p_k,
                                   const BodyParams& params,
                                   const PredictorOptions& opt) {
  if (!(p_k >= 0.0 && p_k <= kProbabilityCap))
    throw Error(ErrorCode::InvalidArgument, "probability outside [0, cap]");
  GainEstimate out;

  double th_den = theta_g_hat;
  if (std::abs(th_den) < opt.eps_den) {
    th_den = th_den < 0.0 ? -opt.eps_den : opt.eps_den;
    out.floored_theta = true;
  }
  double om_den = omega_hat;
  if (std::abs(om_den) < opt.eps_den) {
    om_den = om_den < 0.0 ? -opt.eps_den : opt.eps_den;
    out.floored_omega = true;
  }

  double one_minus = 1.0 - p_k;
  double k_s = (f_hat / th_den) * (1.0 / (one_minus * one_minus));
  double b_s = (f_hat / om_den) * (2.0 / (one_minus * one_minus * one_minus));

  if (k_s < 0.0 || b_s < 0.0) out.clamped_negative = true;
  k_s = std::max(k_s, 0.0);
  b_s = std::max(b_s, 0.0);
  if (k_s > opt.k_s_cap || b_s > opt.b_s_cap) out.capped = true;
  k_s = std::min(k_s, opt.k_s_cap);
  b_s = std::min(b_s, opt.b_s_cap);

  out.k_s = k_s;
  out.b_s = b_s;
  out.k_hat = params.K_c + Vec3{k_s, k_s, k_s};
  out.b_hat = params.B_c + Vec3{b_s, b_s, b_s};
  return out;
}

// Estimated torque: the measured force moment plus gravity at the measured
// orientation, doubled, minus the direction-resolved estimated force moment.
inline Vec3 estimate_torque(const Vec3& f_m, const Vec3& theta_m, double f_hat,
                            const Vec3& phi, const BodyParams& p) {
  Vec3 base = f_m * p.l_b + gravity_vector(theta_m, p);
  Vec3 tau;
  for (std::size_t i = 0; i < 3; ++i)
    tau[i] = base[i] + (base[i] - p.l_b * f_hat * std::tan(phi[i]));
  return tau;
}

// Substep count keeping the stiffest axis inside the stability margin.
// Diagonal mass lower bounds: the x entry is constant, the y and z entries
// bottom out at the bare inertias.
inline int required_substeps(const Vec3& k_hat, const Vec3& b_hat,
                             const BodyParams& p,
                             const PredictorOptions& opt) {
  double m_min[3] = {p.m_b * p.l_b * p.l_b + p.J_b.x, p.J_b.y, p.J_b.z};
  double rate = 0.0;
  for (int i = 0; i < 3; ++i) {
    double r = b_hat[i] / m_min[i] + std::sqrt(k_hat[i] / m_min[i]);
    rate = std::max(rate, r);
  }
  int n = static_cast<int>(std::ceil(p.T * rate / opt.stability_margin));
  return std::clamp(n, 1, opt.max_substeps);
}

struct StepResult {
  PredictorState predictor;
  PendulumState pendulum;
  EstimatedVars vars;
  double e_theta = 0.0;  // scaled orientation deviation after the step
  double e_omega = 0.0;  // scaled velocity deviation after the step
};

// One full estimation step: reduce the measurement, predict, pick the safe
// candidate (or fall back), estimate K/B/F/tau, advance the pendulum one
// period, and report the deviations. Pure in all arguments.
inline StepResult run_step(const PredictorState& state,
                           const PendulumState& pendulum,
                           const SafetyDataset& ds,
                           const ProcessedSample& sample,
                           const BodyParams& params,
                           const PredictorOptions& opt = {},
                           double n_norm = 1.0) {
  const GridSpec& spec = ds.spec;
  EstimatedVars v;
  v.flags.quiescent_force = sample.quiescent;

  v.theta_g = gravity_angle(sample.theta_m.x, sample.theta_m.y, params.l_b);
  ClippedValue w = omega_norm(sample.theta_dot_m, spec.omega_max);
  v.omega = w.value;
  v.flags.omega_clipped = w.clipped;

  GridIndex cur = bin_of(v.theta_g, v.omega, spec);
  v.flags.measured_bin_clamped = cur.clamped;
  v.p_current = ds.P[cur.n][cur.m];

  double prev_t = state.has_prev ? state.prev_theta_g : v.theta_g;
  double prev_w = state.has_prev ? state.prev_omega : v.omega;
  double d_theta = v.theta_g - prev_t;
  double d_omega = v.omega - prev_w;

  auto [tg_pred, w_pred] = predict_pair(state, v.theta_g, v.omega, opt.mode);
  v.theta_g_pred = tg_pred;
  v.omega_pred = w_pred;

  bool pred_clamped = false;
  v.p_pred = predicted_probability(ds, state, v.theta_g, v.omega, &pred_clamped);
  v.flags.predicted_index_clamped = pred_clamped;

  PredictorState seeded = state;
  if (!state.has_prev) {
    // cold start: the current pair doubles as the safe history
    seeded.safe_theta_g = v.theta_g;
    seeded.safe_omega = v.omega;
    seeded.safe_prob = v.p_current;
  }
  SafeCandidate safe =
      safe_candidate(ds, tg_pred, w_pred, seeded, d_theta, d_omega, opt.eps_p);
  v.p_safe = safe.prob;
  v.safe_theta_g = safe.theta_g;
  v.safe_omega = safe.omega;
  v.flags.fallback_taken = safe.fallback;
  v.flags.safe_window_clamped = safe.clamped;

  auto [tg_hat, w_hat] =
      estimate_targets(tg_pred, w_pred, v.theta_g, v.omega, safe);
  v.theta_g_hat = tg_hat;
  v.omega_hat = w_hat;

  v.f_hat = estimate_force(params, w_hat, safe.omega, safe.theta_g);

  GainEstimate gains =
      estimate_gains(v.f_hat, tg_hat, w_hat, v.p_current, params, opt);
  v.k_s = gains.k_s;
  v.b_s = gains.b_s;
  v.k_hat = gains.k_hat;
  v.b_hat = gains.b_hat;
  v.flags.denominator_floored_theta = gains.floored_theta;
  v.flags.denominator_floored_omega = gains.floored_omega;
  v.flags.gain_clamped_negative = gains.clamped_negative;
  v.flags.gain_capped = gains.capped;

  Vec3 f_m = sample.a_mg * params.m_b;
  v.tau_hat = estimate_torque(f_m, sample.theta_m, v.f_hat, sample.phi, params);

  PendulumInputs inputs{sample.theta_m, sample.theta_dot_m, v.k_hat, v.b_hat,
                        v.tau_hat};
  int substeps = required_substeps(v.k_hat, v.b_hat, params, opt);
  PendulumState next;
  try {
    next = integrate_step(pendulum, inputs, params, substeps, opt.bounds);
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " at t=" +
                              std::to_string(sample.t));
  }
  v.flags.degenerate_length =
      length_terms(next.theta, next.theta_dot, params.l_b).degenerate;
  v.flags.workspace_exceeded = !next.valid_workspace();

  StepResult out;
  out.predictor.has_prev = true;
  out.predictor.prev_theta_g = v.theta_g;
  out.predictor.prev_omega = v.omega;
  // carried safe pair stays inside the grid ranges
  out.predictor.safe_theta_g =
      std::clamp(safe.theta_g, spec.theta_g_min, spec.theta_g_max);
  out.predictor.safe_omega = std::clamp(safe.omega, 0.0, spec.omega_max);
  out.predictor.safe_prob = safe.prob;
  out.pendulum = next;
  out.vars = v;
  double scale = 1.0 / (n_norm * n_norm);
  out.e_theta = scale * norm(next.theta - sample.theta_m);
  out.e_omega = scale * norm(next.theta_dot - sample.theta_dot_m);
  return out;
}

}  // namespace psm
