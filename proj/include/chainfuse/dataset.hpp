#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "chainfuse/depth_image.hpp"
#include "chainfuse/transform.hpp"

namespace chainfuse {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EncoderRecord {
  double timestamp = 0.0;
  Eigen::VectorXd q;
};

struct ImageRecord {
  std::int64_t frame_id = 0;
  double timestamp = 0.0;  // capture time
  double delay = 0.0;      // arrival = timestamp + delay
  std::string file;        // relative to the dataset directory
};

struct TruthRecord {
  double timestamp = 0.0;
  Eigen::VectorXd angles;  // physical joints only
  Eigen::Matrix<double, 6, 1> camera_offset = Eigen::Matrix<double, 6, 1>::Zero();
  RigidTransform ee_in_camera;
};

/// A recorded (or generated) sequence: encoder stream, depth-frame index and
/// ground truth. Frames live on disk next to the index, or in memory when
/// the dataset was generated without a directory.
struct Dataset {
  std::filesystem::path dir;
  std::string model_json;
  nlohmann::json scenario;  // config echo, informational
  std::vector<EncoderRecord> encoders;
  std::vector<ImageRecord> images;
  std::vector<TruthRecord> truth;
  std::map<std::int64_t, DepthImage> frames_in_memory;

  DepthImage load_frame(const ImageRecord& rec) const {
    auto it = frames_in_memory.find(rec.frame_id);
    if (it != frames_in_memory.end()) return it->second;
    DepthImage img = load_depth_frame(dir / rec.file);
    img.frame_id = rec.frame_id;
    img.timestamp = rec.timestamp;
    return img;
  }
};

namespace dataset_detail {

inline Eigen::VectorXd vector_from_json(const nlohmann::json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<nlohmann::json>& lines) {
  std::ofstream f(path);
  if (!f) throw DatasetError("cannot write " + path.string());
  for (const auto& l : lines) f << l.dump() << '\n';
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DatasetError("cannot read " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError("malformed record in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dataset_detail

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  {
    std::ofstream f(dir / "model.json");
    if (!f) throw DatasetError("cannot write model.json");
    f << ds.model_json;
  }
  {
    nlohmann::json sc{{"config", ds.scenario}, {"model", "model.json"}};
    std::ofstream f(dir / "scenario.json");
    if (!f) throw DatasetError("cannot write scenario.json");
    f << sc.dump(2);
  }
  std::vector<nlohmann::json> lines;
  for (const auto& r : ds.encoders)
    lines.push_back({{"t", r.timestamp}, {"q", dataset_detail::vector_to_json(r.q)}});
  dataset_detail::write_jsonl(dir / "encoders.jsonl", lines);

  lines.clear();
  for (const auto& r : ds.images) {
    std::string file = r.file;
    if (file.empty()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "frames/%06lld.dpth", static_cast<long long>(r.frame_id));
      file = buf;
    }
    lines.push_back({{"frame_id", r.frame_id}, {"t", r.timestamp}, {"delay", r.delay}, {"file", file}});
    auto it = ds.frames_in_memory.find(r.frame_id);
    if (it != ds.frames_in_memory.end()) save_depth_frame(dir / file, it->second);
  }
  dataset_detail::write_jsonl(dir / "images.jsonl", lines);

  lines.clear();
  for (const auto& r : ds.truth) {
    const auto& q = r.ee_in_camera.rotation;
    lines.push_back(
        {{"t", r.timestamp},
         {"angles", dataset_detail::vector_to_json(r.angles)},
         {"camera_offset", dataset_detail::vector_to_json(r.camera_offset)},
         {"ee", {{"t", {r.ee_in_camera.translation.x(), r.ee_in_camera.translation.y(),
                        r.ee_in_camera.translation.z()}},
                 {"q", {q.w(), q.x(), q.y(), q.z()}}}}});
  }
  dataset_detail::write_jsonl(dir / "truth.jsonl", lines);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.dir = dir;
  {
    std::ifstream f(dir / "model.json");
    if (!f) throw DatasetError("missing model.json in " + dir.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    ds.model_json = ss.str();
  }
  {
    std::ifstream f(dir / "scenario.json");
    if (f) {
      try {
        nlohmann::json sc = nlohmann::json::parse(std::string(std::istreambuf_iterator<char>(f), {}));
        ds.scenario = sc.value("config", nlohmann::json::object());
      } catch (const nlohmann::json::exception& e) {
        throw DatasetError(std::string("malformed scenario.json: ") + e.what());
      }
    }
  }
  for (const auto& l : dataset_detail::read_jsonl(dir / "encoders.jsonl"))
    ds.encoders.push_back({l.at("t").get<double>(), dataset_detail::vector_from_json(l.at("q"))});
  for (const auto& l : dataset_detail::read_jsonl(dir / "images.jsonl"))
    ds.images.push_back({l.at("frame_id").get<std::int64_t>(), l.at("t").get<double>(),
                         l.at("delay").get<double>(), l.at("file").get<std::string>()});
  if (std::filesystem::exists(dir / "truth.jsonl"))
    for (const auto& l : dataset_detail::read_jsonl(dir / "truth.jsonl")) {
      TruthRecord r;
      r.timestamp = l.at("t").get<double>();
      r.angles = dataset_detail::vector_from_json(l.at("angles"));
      const Eigen::VectorXd off = dataset_detail::vector_from_json(l.at("camera_offset"));
      if (off.size() != 6) throw DatasetError("camera_offset must have 6 entries");
      r.camera_offset = off;
      const auto& ee = l.at("ee");
      r.ee_in_camera.translation =
          Eigen::Vector3d(ee.at("t")[0].get<double>(), ee.at("t")[1].get<double>(),
                          ee.at("t")[2].get<double>());
      r.ee_in_camera.rotation =
          Eigen::Quaterniond(ee.at("q")[0].get<double>(), ee.at("q")[1].get<double>(),
                             ee.at("q")[2].get<double>(), ee.at("q")[3].get<double>());
      ds.truth.push_back(std::move(r));
    }
  // per-stream timestamps must be non-decreasing
  auto check = [](const auto& v, const char* what) {
    for (size_t i = 1; i < v.size(); ++i)
      if (v[i].timestamp < v[i - 1].timestamp)
        throw DatasetError(std::string("timestamps not sorted in ") + what);
  };
  check(ds.encoders, "encoders.jsonl");
  check(ds.images, "images.jsonl");
  check(ds.truth, "truth.jsonl");
  return ds;
}

}  // namespace chainfuse
