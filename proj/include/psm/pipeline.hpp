#pragma once

#include <cmath>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "psm/config.hpp"
#include "psm/predictor.hpp"
#include "psm/safety_dataset.hpp"
#include "psm/safety_evaluator.hpp"
#include "psm/signal_pipeline.hpp"

namespace psm {

// Per-step record mirroring the JSONL trace schema in FORMATS.md.
struct StepRecord {
  double t = 0.0;
  EstimatedVars vars;
  PendulumState pendulum;
  double e_theta = 0.0;
  double e_omega = 0.0;
};

struct PushOutput {
  std::optional<StepRecord> step;
  std::optional<SafetyReport> report;
};

// End-to-end streaming evaluation: gravity calibration, sliding-window
// zero-phase filtering (all channels delayed to the filter's latency),
// gravity compensation, the estimation step, and windowed scoring. Memory
// stays bounded by the filter window plus the scoring window.
class StreamingPipeline {
 public:
  StreamingPipeline(const Config& cfg, const SafetyDataset& dataset)
      : cfg_(cfg),
        dataset_(dataset),
        calibrator_(cfg.calibration.still_duration, cfg.calibration.gyro_eps),
        accel_filter_(cfg.filter, cfg.filter_window),
        evaluator_(cfg.eval, 1.0 / cfg.body.T) {
    cfg_.validate();
    dataset_.validate();
  }

  // Feed one raw sample. Returns the estimation record for the delayed
  // sample that became available (if any) and the windowed report (if one
  // completed).
  PushOutput push(const ImuSample& raw) {
    validate_sample(raw);
    if (has_last_t_) {
      if (raw.t <= last_t_)
        throw Error(ErrorCode::InvalidArgument, "timestamps must increase");
      double dt = raw.t - last_t_;
      // the estimator and the spectral bins are scaled by 1/T; a stream at a
      // different rate would be silently mis-scaled
      if (std::abs(dt - cfg_.body.T) > 0.25 * cfg_.body.T)
        throw Error(ErrorCode::InvalidArgument,
                    "sample period " + std::to_string(dt) +
                        " deviates from configured T " +
                        std::to_string(cfg_.body.T));
    }
    last_t_ = raw.t;
    has_last_t_ = true;

    calibrator_.push(raw);

    delay_.push_back(raw);
    if (delay_.size() > accel_filter_.window()) delay_.pop_front();

    PushOutput out;
    std::optional<Vec3> filtered = accel_filter_.push(raw.a_c);
    if (!filtered || !calibrator_.calibrated()) return out;

    // the filter output corresponds to the sample latency steps back
    const ImuSample& delayed =
        delay_[delay_.size() - 1 - accel_filter_.latency_samples()];
    const GravityReference& ref = calibrator_.reference();
    if (delayed.t < ref.t_0) return out;  // monitoring starts after calibration

    if (!pendulum_init_) {
      pendulum_ = PendulumState{delayed.theta_m, delayed.theta_dot_m, delayed.t};
      pendulum_init_ = true;
      r0_ = ypr_rotation(ref.theta_0);
    }

    Vec3 a_mg = gravity_compensate(*filtered, ypr_rotation(delayed.theta_m),
                                   ref.a_g, r0_);
    ForceDirection fd =
        force_direction(a_mg, cfg_.calibration.accel_quiescence);

    ProcessedSample ps;
    ps.t = delayed.t;
    ps.theta_m = delayed.theta_m;
    ps.theta_dot_m = delayed.theta_dot_m;
    ps.a_mg = a_mg;
    ps.phi = fd.phi;
    ps.quiescent = fd.quiescent;

    StepResult step = run_step(state_, pendulum_, dataset_, ps, cfg_.body,
                               cfg_.predictor, cfg_.eval.n_norm);
    state_ = step.predictor;
    pendulum_ = step.pendulum;

    StepRecord rec;
    rec.t = ps.t;
    rec.vars = step.vars;
    rec.pendulum = step.pendulum;
    rec.e_theta = step.e_theta;
    rec.e_omega = step.e_omega;
    out.step = rec;

    out.report = evaluator_.push(ps.t, step.e_theta, step.e_omega,
                                 step.vars.flags.any_guard());
    return out;
  }

  bool calibrated() const { return calibrator_.calibrated(); }
  std::size_t latency_samples() const { return accel_filter_.latency_samples(); }

  // Upper bound on retained samples, for the memory contract.
  std::size_t buffered_samples() const {
    return delay_.size() + cfg_.eval.window_len;
  }

 private:
  Config cfg_;
  SafetyDataset dataset_;
  GravityCalibrator calibrator_;
  StreamingLowpass accel_filter_;
  WindowedEvaluator evaluator_;
  std::deque<ImuSample> delay_;
  PredictorState state_;
  PendulumState pendulum_;
  bool pendulum_init_ = false;
  Mat3 r0_ = Mat3::identity();
  double last_t_ = 0.0;
  bool has_last_t_ = false;
};

}  // namespace psm
