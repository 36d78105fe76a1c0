// chainfuse command line: generate synthetic datasets, run the tracking
// methods over them, score estimates against ground truth and summarize.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chainfuse/eval.hpp"
#include "chainfuse/fusion.hpp"
#include "chainfuse/simulator.hpp"

namespace fs = std::filesystem;
using namespace chainfuse;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

MethodParams load_params(const std::string& path) {
  MethodParams mp;
  if (path.empty()) return mp;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed params file: " + std::string(e.what()));
  }
  if (j.contains("filter")) {
    const auto& f = j["filter"];
    mp.filter.sigma_q = f.value("sigma_q", mp.filter.sigma_q);
    mp.filter.sigma_a = f.value("sigma_a", mp.filter.sigma_a);
    mp.filter.sigma_b = f.value("sigma_b", mp.filter.sigma_b);
    mp.filter.c = f.value("c", mp.filter.c);
    mp.filter.sigma_a_virtual = f.value("sigma_a_virtual", mp.filter.sigma_a_virtual);
    mp.filter.virtual_prior_std = f.value("virtual_prior_std", mp.filter.virtual_prior_std);
  }
  if (j.contains("pixel")) {
    const auto& p = j["pixel"];
    mp.pixel.sigma_z = p.value("sigma_z", mp.pixel.sigma_z);
    mp.pixel.p_occluded = p.value("p_occluded", mp.pixel.p_occluded);
    mp.pixel.w_tail = p.value("w_tail", mp.pixel.w_tail);
  }
  if (j.contains("cpf")) {
    const auto& c = j["cpf"];
    mp.cpf.particle_count = c.value("particle_count", mp.cpf.particle_count);
    mp.cpf.resample_threshold = c.value("resample_threshold", mp.cpf.resample_threshold);
    mp.cpf.probe_renders = c.value("probe_renders", mp.cpf.probe_renders);
    const std::string order = c.value("dimension_order", "random-per-update");
    if (order == "model-order")
      mp.cpf.dimension_order = CpfConfig::DimensionOrder::ModelOrder;
    else if (order == "random-per-update")
      mp.cpf.dimension_order = CpfConfig::DimensionOrder::RandomPerUpdate;
    else
      throw std::invalid_argument("unknown dimension_order: " + order);
    const std::string subset = c.value("pixel_subset", "silhouette-union");
    if (subset == "silhouette-union")
      mp.cpf.pixel_subset = CpfConfig::PixelSubset::SilhouetteUnion;
    else if (subset == "full-image")
      mp.cpf.pixel_subset = CpfConfig::PixelSubset::FullImage;
    else
      throw std::invalid_argument("unknown pixel_subset: " + subset);
  }
  if (j.contains("fusion")) {
    const auto& f = j["fusion"];
    mp.fusion.buffer_capacity = f.value("buffer_capacity", mp.fusion.buffer_capacity);
    mp.fusion.image_timestamp_offset =
        f.value("image_timestamp_offset", mp.fusion.image_timestamp_offset);
  }
  return mp;
}

int cmd_simulate(const std::string& config_path, const std::string& model_path,
                 const std::string& out_dir, std::optional<std::uint64_t> seed) {
  ScenarioConfig cfg;
  if (!config_path.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(config_path));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("malformed scenario config: " + std::string(e.what()));
    }
    cfg = scenario_from_json(j);
  }
  if (seed) cfg.rng_seed = *seed;
  cfg.validate();
  const KinematicModel model =
      model_path.empty() ? default_arm_model() : parse_model(read_file(model_path));
  generate(model, cfg, fs::path(out_dir));
  std::cout << "dataset written to " << out_dir << "\n";
  return 0;
}

void write_estimates_csv(const fs::path& path, const std::vector<EstimateAtTruth>& rows, int n) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "run,timestamp";
  for (int j = 0; j < n; ++j) f << ",angle_mean_" << j;
  for (int j = 0; j < n; ++j) f << ",angle_std_" << j;
  for (int j = 0; j < n; ++j) f << ",bias_mean_" << j;
  for (int j = 0; j < n; ++j) f << ",bias_std_" << j;
  f << ",ee_tx,ee_ty,ee_tz,ee_qw,ee_qx,ee_qy,ee_qz";
  for (int j = 0; j < 6; ++j) f << ",camera_offset_" << j;
  f << "\n";
  for (const auto& e : rows) {
    f << e.run << ',' << fmt17(e.timestamp);
    for (int j = 0; j < n; ++j) f << ',' << fmt17(e.angle_mean[j]);
    for (int j = 0; j < n; ++j) f << ',' << fmt17(e.angle_std[j]);
    for (int j = 0; j < n; ++j) f << ',' << fmt17(e.bias_mean[j]);
    for (int j = 0; j < n; ++j) f << ',' << fmt17(e.bias_std[j]);
    const auto& t = e.ee_in_camera;
    f << ',' << fmt17(t.translation.x()) << ',' << fmt17(t.translation.y()) << ','
      << fmt17(t.translation.z()) << ',' << fmt17(t.rotation.w()) << ','
      << fmt17(t.rotation.x()) << ',' << fmt17(t.rotation.y()) << ',' << fmt17(t.rotation.z());
    for (int j = 0; j < 6; ++j) f << ',' << fmt17(e.camera_offset[j]);
    f << "\n";
  }
}

int cmd_track(const std::string& data_dir, const std::string& method_name,
              const std::string& params_path, const std::string& out_csv, int runs,
              std::uint64_t seed) {
  const auto method = method_from_name(method_name);
  if (!method) {
    std::cerr << "unknown method '" << method_name << "'. Available:";
    for (MethodId m : all_methods()) std::cerr << ' ' << chainfuse::method_name(m);
    std::cerr << "\n";
    return kExitUsage;
  }
  const Dataset ds = load_dataset(data_dir);
  const KinematicModel model = parse_model(ds.model_json);
  const MethodParams mp = load_params(params_path);
  std::vector<EstimateAtTruth> all;
  for (int run = 0; run < runs; ++run) {
    auto rows = track_dataset(*method, ds, model, mp, run, seed);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  const int n = model.virtual_injected() ? model.joint_count() : model.joint_count() + 6;
  write_estimates_csv(out_csv, all, n);
  std::cout << "wrote " << all.size() << " estimate rows to " << out_csv << "\n";
  return 0;
}

struct EstimateRow {
  int run;
  double timestamp;
  RigidTransform pose;
};

std::vector<EstimateRow> read_estimates_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::string header;
  if (!std::getline(f, header)) throw IoError("empty estimates file");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  auto col = [&](const std::string& name) {
    for (size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    throw DatasetError("estimates file lacks column " + name);
  };
  const int c_run = col("run"), c_t = col("timestamp");
  const int c_tx = col("ee_tx"), c_qw = col("ee_qw");
  std::vector<EstimateRow> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    EstimateRow r;
    r.run = static_cast<int>(v[c_run]);
    r.timestamp = v[c_t];
    r.pose.translation = {v[c_tx], v[c_tx + 1], v[c_tx + 2]};
    r.pose.rotation = Eigen::Quaterniond(v[c_qw], v[c_qw + 1], v[c_qw + 2], v[c_qw + 3]);
    rows.push_back(r);
  }
  return rows;
}

void write_summary_rows(std::ostream& f, const std::vector<SummaryRow>& rows) {
  f << "sequence,method,window,trans_p1,trans_p25,trans_p50,trans_p75,trans_p99,"
       "ang_p1,ang_p25,ang_p50,ang_p75,ang_p99,runs,samples\n";
  for (const auto& r : rows) {
    f << r.sequence << ',' << r.method << ',' << r.window << ',' << fmt17(r.trans_p1) << ','
      << fmt17(r.trans_p25) << ',' << fmt17(r.trans_p50) << ',' << fmt17(r.trans_p75) << ','
      << fmt17(r.trans_p99) << ',' << fmt17(r.ang_p1) << ',' << fmt17(r.ang_p25) << ','
      << fmt17(r.ang_p50) << ',' << fmt17(r.ang_p75) << ',' << fmt17(r.ang_p99) << ','
      << r.runs << ',' << r.samples << "\n";
  }
}

int cmd_eval(const std::string& data_dir, const std::string& estimates_csv,
             const std::string& errors_csv, const std::string& summary_csv,
             double convergence_window, const std::string& sequence,
             const std::string& method) {
  const Dataset ds = load_dataset(data_dir);
  if (ds.truth.empty()) throw DatasetError("dataset has no truth records");
  const auto rows = read_estimates_csv(estimates_csv);

  std::vector<ErrorSample> samples;
  int max_run = 0;
  size_t ti = 0;
  for (const auto& r : rows) {
    if (ti >= ds.truth.size() || ds.truth[ti].timestamp > r.timestamp + 1e-9) ti = 0;
    while (ti < ds.truth.size() && ds.truth[ti].timestamp < r.timestamp - 1e-9) ++ti;
    if (ti >= ds.truth.size() || std::abs(ds.truth[ti].timestamp - r.timestamp) > 1e-9)
      throw DatasetError("estimate timestamp has no matching truth record");
    const auto [trans, ang] = pose_errors(r.pose, ds.truth[ti].ee_in_camera);
    samples.push_back({r.timestamp, trans, ang, r.run});
    max_run = std::max(max_run, r.run);
  }
  if (samples.empty()) throw DatasetError("no estimate rows to score");

  {
    std::ofstream f(errors_csv);
    if (!f) throw IoError("cannot write " + errors_csv);
    f << "timestamp,run,trans_m,ang_rad\n";
    for (const auto& s : samples)
      f << fmt17(s.timestamp) << ',' << s.run << ',' << fmt17(s.translational) << ','
        << fmt17(s.angular) << "\n";
  }

  std::vector<SummaryRow> out;
  out.push_back(summarize(samples, max_run + 1, sequence, method, "full"));
  std::vector<ErrorSample> post;
  for (const auto& s : samples)
    if (s.timestamp >= convergence_window) post.push_back(s);
  if (!post.empty())
    out.push_back(summarize(post, max_run + 1, sequence, method, "post-convergence"));
  std::ofstream f(summary_csv);
  if (!f) throw IoError("cannot write " + summary_csv);
  write_summary_rows(f, out);
  std::cout << "wrote " << samples.size() << " error samples; summary in " << summary_csv << "\n";
  return 0;
}

int cmd_report(const std::string& summary_csv) {
  std::ifstream f(summary_csv);
  if (!f) throw IoError("cannot read " + summary_csv);
  std::string line;
  std::getline(f, line);  // header
  std::printf("%-14s %-20s %-16s %10s %10s %10s %10s %10s %10s\n", "sequence", "method", "window",
              "t_p1[mm]", "t_p25[mm]", "t_p50[mm]", "t_p75[mm]", "t_p99[mm]", "a_p50[deg]");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> v;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(tok);
    if (v.size() < 15) continue;
    std::printf("%-14s %-20s %-16s %10.2f %10.2f %10.2f %10.2f %10.2f %10.3f\n", v[0].c_str(),
                v[1].c_str(), v[2].c_str(), 1e3 * std::stod(v[3]), 1e3 * std::stod(v[4]),
                1e3 * std::stod(v[5]), 1e3 * std::stod(v[6]), 1e3 * std::stod(v[7]),
                180.0 / M_PI * std::stod(v[10]));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"articulated-arm tracking: simulate, track, eval, report"};
  app.require_subcommand(1);

  std::string config_path, model_path, out_dir;
  std::optional<std::uint64_t> sim_seed;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--config", config_path, "scenario JSON file");
  sim->add_option("--model", model_path, "model JSON (default: built-in 7-joint arm)");
  sim->add_option("--out", out_dir, "output dataset directory")->required();
  sim->add_option("--seed", sim_seed, "override the scenario seed");

  std::string data_dir, method_name = "full-fusion", params_path, estimates_out = "estimates.csv";
  int runs = 1;
  std::uint64_t track_seed = 0;
  bool deterministic = false;
  auto* track = app.add_subcommand("track", "run a tracking method over a dataset");
  track->add_option("--data", data_dir, "dataset directory")->required();
  track->add_option("--method", method_name, "method id");
  track->add_option("--params", params_path, "parameter JSON file");
  track->add_option("--out", estimates_out, "estimates CSV path");
  track->add_option("--runs", runs, "number of seeded runs to pool")->check(CLI::PositiveNumber);
  track->add_option("--seed", track_seed, "base seed");
  track->add_flag("--deterministic", deterministic,
                  "single-threaded reproducible mode (always on; flag kept for scripts)");

  std::string eval_data, eval_estimates = "estimates.csv", errors_out = "errors.csv",
              summary_out = "summary.csv", sequence_id = "sequence", eval_method;
  double window = 10.0;
  auto* ev = app.add_subcommand("eval", "score estimates against ground truth");
  ev->add_option("--data", eval_data, "dataset directory")->required();
  ev->add_option("--estimates", eval_estimates, "estimates CSV");
  ev->add_option("--out-errors", errors_out, "errors CSV path");
  ev->add_option("--out-summary", summary_out, "summary CSV path");
  ev->add_option("--convergence-window", window, "seconds excluded in post-convergence rows");
  ev->add_option("--sequence", sequence_id, "sequence id for the summary");
  ev->add_option("--method", eval_method, "method id for the summary");

  std::string report_summary = "summary.csv";
  auto* rep = app.add_subcommand("report", "print a percentile table from a summary CSV");
  rep->add_option("--summary", report_summary, "summary CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, model_path, out_dir, sim_seed);
    if (track->parsed())
      return cmd_track(data_dir, method_name, params_path, estimates_out, runs, track_seed);
    if (ev->parsed())
      return cmd_eval(eval_data, eval_estimates, errors_out, summary_out, window, sequence_id,
                      eval_method);
    if (rep->parsed()) return cmd_report(report_summary);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
