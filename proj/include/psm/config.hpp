#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "json.hpp"

#include "psm/body_params.hpp"
#include "psm/errors.hpp"
#include "psm/predictor.hpp"
#include "psm/safety_dataset.hpp"
#include "psm/safety_evaluator.hpp"
#include "psm/signal_pipeline.hpp"

namespace psm {

struct CalibrationSpec {
  double still_duration = 1.0;   // [s] of stillness for the gravity reference
  double gyro_eps = 0.05;        // [rad/s] stillness bound
  double accel_quiescence = 0.05;  // [m/s^2] force-direction threshold
};

// Full run configuration. Loads from a single JSON file; unknown keys are
// rejected so typos fail loudly instead of silently using defaults.
struct Config {
  BodyParams body = default_body_params();
  GridSpec grid;
  FilterSpec filter;
  std::size_t filter_window = 128;  // streaming zero-phase window [samples]
  EvalSpec eval;
  PredictorOptions predictor;
  CalibrationSpec calibration;

  void validate() const {
    body.validate();
    grid.validate();
    filter.validate();
    eval.validate();
    predictor.validate();
    if (filter_window < static_cast<std::size_t>(3 * filter.n_f))
      throw Error(ErrorCode::ConfigError,
                  "filter_window must hold at least 3*n_f samples");
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j,
                           const std::vector<std::string>& known,
                           const std::string& where) {
  if (!j.is_object())
    throw Error(ErrorCode::ConfigError, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw Error(ErrorCode::ConfigError,
                  "unknown key '" + it.key() + "' in " + where);
}

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw Error(ErrorCode::ConfigError, where + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json to_json(const Vec3& v) {
  return nlohmann::json::array({v.x, v.y, v.z});
}

}  // namespace detail

inline nlohmann::json to_json(const Config& c) {
  nlohmann::json j;
  j["body"] = {{"m_b", c.body.m_b},
               {"l_b", c.body.l_b},
               {"r_b", c.body.r_b},
               {"J_b", detail::to_json(c.body.J_b)},
               {"K_c", detail::to_json(c.body.K_c)},
               {"B_c", detail::to_json(c.body.B_c)},
               {"g", c.body.g},
               {"T", c.body.T},
               {"J_bs", c.body.J_bs}};
  j["grid"] = to_json(c.grid);
  j["filter"] = {{"n_f", c.filter.n_f},
                 {"f_c", c.filter.f_c},
                 {"window", c.filter_window}};
  j["eval"] = {{"window_len", c.eval.window_len},
               {"lambda_m", c.eval.lambda_m},
               {"lambda", c.eval.lambda},
               {"eps_em", c.eval.eps_em},
               {"eps_ec", c.eval.eps_ec},
               {"n_norm", c.eval.n_norm}};
  j["predictor"] = {
      {"mode", c.predictor.mode == PredictionMode::OneStepAhead
                   ? "one_step_ahead"
                   : "printed"},
      {"eps_p", c.predictor.eps_p},
      {"eps_den", c.predictor.eps_den},
      {"k_s_cap", c.predictor.k_s_cap},
      {"b_s_cap", c.predictor.b_s_cap},
      {"stability_margin", c.predictor.stability_margin},
      {"max_substeps", c.predictor.max_substeps},
      {"max_angle", c.predictor.bounds.max_angle},
      {"max_velocity", c.predictor.bounds.max_velocity}};
  j["calibration"] = {{"still_duration", c.calibration.still_duration},
                      {"gyro_eps", c.calibration.gyro_eps},
                      {"accel_quiescence", c.calibration.accel_quiescence}};
  return j;
}

inline Config config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(
      j, {"body", "grid", "filter", "eval", "predictor", "calibration"},
      "config");
  Config c;

  if (j.contains("body")) {
    const auto& b = j["body"];
    detail::reject_unknown(
        b, {"m_b", "l_b", "r_b", "J_b", "K_c", "B_c", "g", "T", "J_bs"},
        "config.body");
    c.body.m_b = b.value("m_b", c.body.m_b);
    c.body.l_b = b.value("l_b", c.body.l_b);
    c.body.r_b = b.value("r_b", c.body.r_b);
    if (b.contains("K_c")) c.body.K_c = detail::vec3_from_json(b["K_c"], "K_c");
    if (b.contains("B_c")) c.body.B_c = detail::vec3_from_json(b["B_c"], "B_c");
    c.body.g = b.value("g", c.body.g);
    c.body.T = b.value("T", c.body.T);
    c.body.J_bs = b.value("J_bs", c.body.J_bs);
    if (b.contains("J_b")) {
      c.body.J_b = detail::vec3_from_json(b["J_b"], "J_b");
      c.body.inertia_overridden = !c.body.inertia_matches_geometry();
    } else {
      c.body.J_b = BodyParams::cylinder_inertia(c.body.m_b, c.body.l_b, c.body.r_b);
    }
  }

  if (j.contains("grid")) c.grid = grid_spec_from_json(j["grid"]);

  if (j.contains("filter")) {
    const auto& f = j["filter"];
    detail::reject_unknown(f, {"n_f", "f_c", "window"}, "config.filter");
    c.filter.n_f = f.value("n_f", c.filter.n_f);
    c.filter.f_c = f.value("f_c", c.filter.f_c);
    c.filter_window = f.value("window", c.filter_window);
  }

  if (j.contains("eval")) {
    const auto& e = j["eval"];
    detail::reject_unknown(
        e, {"window_len", "lambda_m", "lambda", "eps_em", "eps_ec", "n_norm"},
        "config.eval");
    c.eval.window_len = e.value("window_len", c.eval.window_len);
    c.eval.lambda_m = e.value("lambda_m", c.eval.lambda_m);
    c.eval.lambda = e.value("lambda", c.eval.lambda);
    c.eval.eps_em = e.value("eps_em", c.eval.eps_em);
    c.eval.eps_ec = e.value("eps_ec", c.eval.eps_ec);
    c.eval.n_norm = e.value("n_norm", c.eval.n_norm);
  }

  if (j.contains("predictor")) {
    const auto& p = j["predictor"];
    detail::reject_unknown(p,
                           {"mode", "eps_p", "eps_den", "k_s_cap", "b_s_cap",
                            "stability_margin", "max_substeps", "max_angle",
                            "max_velocity"},
                           "config.predictor");
    if (p.contains("mode")) {
      std::string mode = p["mode"].get<std::string>();
      if (mode == "one_step_ahead")
        c.predictor.mode = PredictionMode::OneStepAhead;
      else if (mode == "printed")
        c.predictor.mode = PredictionMode::Printed;
      else
        throw Error(ErrorCode::ConfigError, "unknown predictor mode: " + mode);
    }
    c.predictor.eps_p = p.value("eps_p", c.predictor.eps_p);
    c.predictor.eps_den = p.value("eps_den", c.predictor.eps_den);
    c.predictor.k_s_cap = p.value("k_s_cap", c.predictor.k_s_cap);
    c.predictor.b_s_cap = p.value("b_s_cap", c.predictor.b_s_cap);
    c.predictor.stability_margin =
        p.value("stability_margin", c.predictor.stability_margin);
    c.predictor.max_substeps = p.value("max_substeps", c.predictor.max_substeps);
    c.predictor.bounds.max_angle =
        p.value("max_angle", c.predictor.bounds.max_angle);
    c.predictor.bounds.max_velocity =
        p.value("max_velocity", c.predictor.bounds.max_velocity);
  }

  if (j.contains("calibration")) {
    const auto& cal = j["calibration"];
    detail::reject_unknown(
        cal, {"still_duration", "gyro_eps", "accel_quiescence"},
        "config.calibration");
    c.calibration.still_duration =
        cal.value("still_duration", c.calibration.still_duration);
    c.calibration.gyro_eps = cal.value("gyro_eps", c.calibration.gyro_eps);
    c.calibration.accel_quiescence =
        cal.value("accel_quiescence", c.calibration.accel_quiescence);
  }

  c.validate();
  return c;
}

}  // namespace psm
