// psm: predictive safety-model toolkit.
//
// Subcommands:
//   simulate       generate a synthetic IMU stream (optionally evaluate it)
//   build-dataset  build the probability dataset from recordings
//   evaluate       run the streaming evaluation over an IMU CSV
//   trace          dump per-step estimation records as JSON lines
//
// Errors leave machine-readable JSON on stderr and a nonzero exit code.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "psm/config.hpp"
#include "psm/io.hpp"
#include "psm/pipeline.hpp"
#include "psm/synthetic.hpp"

namespace {

using nlohmann::json;

psm::Config load_config(const std::string& path) {
  if (path.empty()) return psm::Config{};
  return psm::config_from_json(psm::read_json_file(path));
}

json report_to_json(const psm::SafetyReport& r) {
  return {{"t", r.t},
          {"e_theta", r.e_theta},
          {"e_omega", r.e_omega},
          {"E_m_theta", r.e_m_theta},
          {"E_m_omega", r.e_m_omega},
          {"level", psm::to_string(r.level)},
          {"guard", r.guard_flagged}};
}

json flags_to_json(const psm::StepFlags& f) {
  return {{"omega_clipped", f.omega_clipped},
          {"measured_bin_clamped", f.measured_bin_clamped},
          {"predicted_index_clamped", f.predicted_index_clamped},
          {"safe_window_clamped", f.safe_window_clamped},
          {"fallback_taken", f.fallback_taken},
          {"denominator_floored_theta", f.denominator_floored_theta},
          {"denominator_floored_omega", f.denominator_floored_omega},
          {"gain_clamped_negative", f.gain_clamped_negative},
          {"gain_capped", f.gain_capped},
          {"quiescent_force", f.quiescent_force},
          {"degenerate_length", f.degenerate_length},
          {"workspace_exceeded", f.workspace_exceeded}};
}

json vec_to_json(const psm::Vec3& v) { return json::array({v.x, v.y, v.z}); }

json step_to_json(const psm::StepRecord& rec) {
  const psm::EstimatedVars& v = rec.vars;
  return {{"t", rec.t},
          {"theta_g", v.theta_g},
          {"omega", v.omega},
          {"P_k", v.p_current},
          {"theta_g_pred", v.theta_g_pred},
          {"omega_pred", v.omega_pred},
          {"P_pred", v.p_pred},
          {"P_safe", v.p_safe},
          {"safe_theta_g", v.safe_theta_g},
          {"safe_omega", v.safe_omega},
          {"theta_g_hat", v.theta_g_hat},
          {"omega_hat", v.omega_hat},
          {"F_hat", v.f_hat},
          {"k_s", v.k_s},
          {"b_s", v.b_s},
          {"K_hat", vec_to_json(v.k_hat)},
          {"B_hat", vec_to_json(v.b_hat)},
          {"tau_hat", vec_to_json(v.tau_hat)},
          {"flags", flags_to_json(v.flags)},
          {"pendulum_theta", vec_to_json(rec.pendulum.theta)},
          {"pendulum_theta_dot", vec_to_json(rec.pendulum.theta_dot)},
          {"e_theta", rec.e_theta},
          {"e_omega", rec.e_omega}};
}

// Minimal SVG rendering of the two score traces with threshold lines.
std::string render_svg(const std::vector<psm::SafetyReport>& reports,
                       const psm::EvalSpec& eval) {
  const int width = 860, height = 320, ml = 60, mr = 20, mt = 20, mb = 40;
  double y_max = 2.0 * eval.eps_ec;
  for (const auto& r : reports)
    y_max = std::max({y_max, r.e_m_theta, r.e_m_omega});
  y_max *= 1.05;
  double t0 = reports.empty() ? 0.0 : reports.front().t;
  double t1 = reports.empty() ? 1.0 : std::max(reports.back().t, t0 + 1e-9);

  auto x_of = [&](double t) {
    return ml + (width - ml - mr) * (t - t0) / (t1 - t0);
  };
  auto y_of = [&](double v) {
    return height - mb - (height - mt - mb) * (v / y_max);
  };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) +
         "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (auto [value, name, color] :
       {std::tuple<double, const char*, const char*>{eval.eps_em, "eps_em",
                                                     "#888"},
        {eval.eps_ec, "eps_ec", "#444"}}) {
    svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(y_of(value)) +
           "\" x2=\"" + fmt(width - mr) + "\" y2=\"" + fmt(y_of(value)) +
           "\" stroke=\"" + color + "\" stroke-dasharray=\"6,4\"/>\n";
    svg += "<text x=\"" + fmt(width - mr - 50) + "\" y=\"" +
           fmt(y_of(value) - 4) + "\" font-size=\"11\">" + name + "</text>\n";
  }
  for (auto [channel, color] :
       {std::pair<int, const char*>{0, "#1f77b4"}, {1, "#d62728"}}) {
    std::string pts;
    for (const auto& r : reports) {
      double v = channel == 0 ? r.e_m_theta : r.e_m_omega;
      pts += fmt(x_of(r.t)) + "," + fmt(y_of(v)) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
  }
  svg += "<text x=\"" + fmt(ml) + "\" y=\"14\" font-size=\"12\">E_m_theta "
         "(blue), E_m_omega (red)</text>\n";
  svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(height - mb) + "\" x2=\"" +
         fmt(width - mr) + "\" y2=\"" + fmt(height - mb) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) +
         "\" y2=\"" + fmt(height - mb) + "\" stroke=\"black\"/>\n";
  svg += "</svg>\n";
  return svg;
}

struct LabeledCounts {
  int safe_total = 0, safe_high = 0;
  int perturbed_total = 0, perturbed_non_high = 0;
};

// A window counts as safe/perturbed only when it lies entirely inside
// same-label segments.
LabeledCounts label_reports(const std::vector<psm::SafetyReport>& reports,
                            const psm::SyntheticScenario& scn,
                            const psm::Config& cfg) {
  LabeledCounts out;
  double span = (cfg.eval.window_len - 1) * cfg.body.T;
  double total = psm::scenario_duration(scn);
  for (const auto& r : reports) {
    double begin = r.t - span;
    if (begin < 0.0 || r.t > total) continue;
    bool b = psm::in_perturbed_segment(scn, begin);
    bool e = psm::in_perturbed_segment(scn, r.t);
    if (b != e) continue;  // straddles a boundary
    if (b) {
      ++out.perturbed_total;
      if (r.level != psm::SafetyLevel::High) ++out.perturbed_non_high;
    } else {
      ++out.safe_total;
      if (r.level == psm::SafetyLevel::High) ++out.safe_high;
    }
  }
  return out;
}

std::string percent(int num, int den) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", den > 0 ? 100.0 * num / den : 0.0);
  return buf;
}

void print_summary(std::ostream& os,
                   const std::vector<psm::SafetyReport>& reports,
                   const std::optional<psm::SyntheticScenario>& labels,
                   const psm::Config& cfg) {
  int high = 0, medium = 0, low = 0;
  for (const auto& r : reports) {
    if (r.level == psm::SafetyLevel::High) ++high;
    else if (r.level == psm::SafetyLevel::Medium) ++medium;
    else ++low;
  }
  int total = static_cast<int>(reports.size());
  os << "windows " << total << "  High " << high << " (" << percent(high, total)
     << ")  Medium " << medium << " (" << percent(medium, total) << ")  Low "
     << low << " (" << percent(low, total) << ")\n";
  if (labels) {
    LabeledCounts lc = label_reports(reports, *labels, cfg);
    os << "labeled safe " << lc.safe_total << "  High " << lc.safe_high << " ("
       << percent(lc.safe_high, lc.safe_total) << ")\n";
    os << "labeled perturbed " << lc.perturbed_total << "  non-High "
       << lc.perturbed_non_high << " ("
       << percent(lc.perturbed_non_high, lc.perturbed_total) << ")\n";
    int match = lc.safe_high + lc.perturbed_non_high;
    int labeled = lc.safe_total + lc.perturbed_total;
    os << "label success " << match << "/" << labeled << " ("
       << percent(match, labeled) << ")\n";
  }
}

struct EvalOutput {
  std::vector<psm::SafetyReport> reports;
  std::vector<psm::StepRecord> steps;
};

EvalOutput run_stream(const psm::Config& cfg, const psm::SafetyDataset& ds,
                      const std::vector<psm::ImuSample>& stream,
                      bool keep_steps) {
  psm::StreamingPipeline pipe(cfg, ds);
  EvalOutput out;
  for (const auto& s : stream) {
    psm::PushOutput po = pipe.push(s);
    if (po.step && keep_steps) out.steps.push_back(*po.step);
    if (po.report) out.reports.push_back(*po.report);
  }
  return out;
}

void write_reports(const std::string& path,
                   const std::vector<psm::SafetyReport>& reports) {
  std::ofstream os(path);
  if (!os) throw psm::Error(psm::ErrorCode::IoError, "cannot open: " + path);
  for (const auto& r : reports) os << report_to_json(r).dump() << "\n";
}

void write_steps(const std::string& path,
                 const std::vector<psm::StepRecord>& steps, std::size_t limit) {
  std::ofstream os(path);
  if (!os) throw psm::Error(psm::ErrorCode::IoError, "cannot open: " + path);
  std::size_t n = limit > 0 ? std::min(limit, steps.size()) : steps.size();
  for (std::size_t i = 0; i < n; ++i) os << step_to_json(steps[i]).dump() << "\n";
}

std::int64_t build_timestamp() {
  // honored only when the caller pins it; golden runs stay byte-identical
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"))
    return std::strtoll(epoch, nullptr, 10);
  return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& cfg_path,
                 std::int64_t seed_override, const std::string& out_path,
                 const std::string& dataset_path, const std::string& report_path,
                 const std::string& svg_path) {
  psm::Config cfg = load_config(cfg_path);
  psm::SyntheticScenario scn =
      psm::scenario_from_json(psm::read_json_file(scenario_path));
  if (seed_override >= 0) scn.seed = static_cast<std::uint64_t>(seed_override);
  // the estimator runs at the configured period; the scenario must agree
  if (std::abs(scn.sample_rate * cfg.body.T - 1.0) > 1e-9)
    throw psm::Error(psm::ErrorCode::ConfigError,
                     "scenario sample_rate must equal 1/body.T");
  std::vector<psm::ImuSample> stream = psm::generate_synthetic(scn, cfg.body);
  if (!out_path.empty()) psm::write_csv_file(out_path, stream);

  if (!dataset_path.empty()) {
    psm::SafetyDataset ds =
        psm::dataset_from_json(psm::read_json_file(dataset_path));
    EvalOutput ev = run_stream(cfg, ds, stream, false);
    if (!report_path.empty()) write_reports(report_path, ev.reports);
    if (!svg_path.empty())
      psm::write_text_file(svg_path, render_svg(ev.reports, cfg.eval));
    print_summary(std::cout, ev.reports, scn, cfg);
  } else {
    std::cout << "samples " << stream.size() << "\n";
  }
  return 0;
}

int cmd_build_dataset(const std::string& spec_path, const std::string& cfg_path,
                      const std::string& out_path,
                      const std::vector<std::string>& recordings,
                      bool no_smooth) {
  psm::Config cfg = load_config(cfg_path);
  psm::GridSpec spec = cfg.grid;
  if (!spec_path.empty())
    spec = psm::grid_spec_from_json(psm::read_json_file(spec_path));

  std::vector<std::vector<psm::ImuSample>> recs;
  for (const auto& path : recordings) recs.push_back(psm::read_csv_file(path));

  psm::BuildOptions opt;
  opt.smooth = !no_smooth;
  opt.meta.recordings = recordings;
  opt.meta.tool = "psm 1.0";
  opt.meta.build_unix = build_timestamp();
  psm::SafetyDataset ds = psm::build_dataset(recs, spec, cfg.body, opt);
  psm::write_text_file(out_path, psm::to_json(ds).dump(2) + "\n");

  std::int64_t visits = 0;
  int cells = 0;
  for (const auto& row : ds.counts)
    for (auto c : row) {
      visits += c;
      cells += c > 0 ? 1 : 0;
    }
  std::cout << "dataset " << ds.spec.n_theta << "x" << ds.spec.m_omega
            << "  samples " << visits << "  occupied cells " << cells << "\n";
  return 0;
}

int cmd_evaluate(const std::string& cfg_path, const std::string& dataset_path,
                 const std::string& input_path, const std::string& out_path,
                 const std::string& labels_path, const std::string& svg_path,
                 const std::string& trace_path) {
  psm::Config cfg = load_config(cfg_path);
  psm::SafetyDataset ds =
      psm::dataset_from_json(psm::read_json_file(dataset_path));
  std::vector<psm::ImuSample> stream = psm::read_csv_file(input_path);

  EvalOutput ev = run_stream(cfg, ds, stream, !trace_path.empty());
  if (!out_path.empty()) write_reports(out_path, ev.reports);
  if (!trace_path.empty()) write_steps(trace_path, ev.steps, 0);
  if (!svg_path.empty())
    psm::write_text_file(svg_path, render_svg(ev.reports, cfg.eval));

  std::optional<psm::SyntheticScenario> labels;
  if (!labels_path.empty())
    labels = psm::scenario_from_json(psm::read_json_file(labels_path));
  print_summary(std::cout, ev.reports, labels, cfg);
  return 0;
}

int cmd_trace(const std::string& cfg_path, const std::string& dataset_path,
              const std::string& input_path, const std::string& out_path,
              std::size_t steps) {
  psm::Config cfg = load_config(cfg_path);
  psm::SafetyDataset ds =
      psm::dataset_from_json(psm::read_json_file(dataset_path));
  std::vector<psm::ImuSample> stream = psm::read_csv_file(input_path);
  EvalOutput ev = run_stream(cfg, ds, stream, true);
  write_steps(out_path, ev.steps, steps);
  std::cout << "steps " << (steps > 0 ? std::min(steps, ev.steps.size())
                                      : ev.steps.size())
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"predictive safety model toolkit"};
  app.require_subcommand(1);

  // simulate
  std::string sim_scenario, sim_config, sim_out, sim_dataset, sim_report,
      sim_svg;
  std::int64_t sim_seed = -1;
  CLI::App* sim = app.add_subcommand("simulate",
                                     "generate a synthetic IMU stream");
  sim->add_option("--scenario", sim_scenario, "scenario JSON")->required();
  sim->add_option("--config", sim_config, "config JSON");
  sim->add_option("--seed", sim_seed, "override the scenario seed");
  sim->add_option("--out", sim_out, "output CSV path");
  sim->add_option("--dataset", sim_dataset, "dataset JSON (also evaluate)");
  sim->add_option("--report", sim_report, "report JSONL path");
  sim->add_option("--svg", sim_svg, "score plot SVG path");

  // build-dataset
  std::string bd_spec, bd_config, bd_out;
  std::vector<std::string> bd_recordings;
  bool bd_no_smooth = false;
  CLI::App* bd = app.add_subcommand("build-dataset",
                                    "build the probability dataset");
  bd->add_option("--spec", bd_spec, "grid spec JSON");
  bd->add_option("--config", bd_config, "config JSON");
  bd->add_option("--out", bd_out, "output dataset JSON")->required();
  bd->add_option("recordings", bd_recordings, "IMU CSV recordings")
      ->required();
  bd->add_flag("--no-smooth", bd_no_smooth, "skip the 3x3 blur pass");

  // evaluate
  std::string ev_config, ev_dataset, ev_input, ev_out, ev_labels, ev_svg,
      ev_trace;
  CLI::App* ev = app.add_subcommand("evaluate",
                                    "evaluate an IMU stream against a dataset");
  ev->add_option("--config", ev_config, "config JSON");
  ev->add_option("--dataset", ev_dataset, "dataset JSON")->required();
  ev->add_option("--input", ev_input, "IMU CSV input")->required();
  ev->add_option("--out", ev_out, "report JSONL path");
  ev->add_option("--labels", ev_labels, "scenario JSON giving ground truth");
  ev->add_option("--svg", ev_svg, "score plot SVG path");
  ev->add_option("--trace", ev_trace, "per-step JSONL path");

  // trace
  std::string tr_config, tr_dataset, tr_input, tr_out;
  std::size_t tr_steps = 0;
  CLI::App* tr = app.add_subcommand("trace", "dump per-step estimation records");
  tr->add_option("--config", tr_config, "config JSON");
  tr->add_option("--dataset", tr_dataset, "dataset JSON")->required();
  tr->add_option("--input", tr_input, "IMU CSV input")->required();
  tr->add_option("--out", tr_out, "trace JSONL path")->required();
  tr->add_option("--steps", tr_steps, "limit the number of steps (0 = all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(sim_scenario, sim_config, sim_seed, sim_out,
                          sim_dataset, sim_report, sim_svg);
    if (bd->parsed())
      return cmd_build_dataset(bd_spec, bd_config, bd_out, bd_recordings,
                               bd_no_smooth);
    if (ev->parsed())
      return cmd_evaluate(ev_config, ev_dataset, ev_input, ev_out, ev_labels,
                          ev_svg, ev_trace);
    if (tr->parsed())
      return cmd_trace(tr_config, tr_dataset, tr_input, tr_out, tr_steps);
  } catch (const psm::Error& e) {
    nlohmann::json err = {
        {"error", {{"code", psm::to_string(e.code())}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err = {
        {"error", {{"code", "Internal"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
