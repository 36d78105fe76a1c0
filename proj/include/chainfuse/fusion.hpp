#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "chainfuse/dataset.hpp"
#include "chainfuse/encoder_filter.hpp"
#include "chainfuse/image_update.hpp"
#include "chainfuse/kinematics.hpp"
#include "chainfuse/model.hpp"

namespace chainfuse {

struct FusionError : std::runtime_error {
  enum class Code { OutOfOrder, DelayExceedsHorizon, ImageLeadsEncoders, EmptyBuffer };
  Code code;
  FusionError(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

/// Tracker state snapshot derived from the newest buffer entry.
struct TrackerOutput {
  double timestamp = 0.0;
  Eigen::VectorXd angle_mean, angle_std;
  Eigen::VectorXd bias_mean, bias_std;
  RigidTransform ee_in_camera;
  Eigen::Matrix<double, 6, 1> camera_offset = Eigen::Matrix<double, 6, 1>::Zero();
};

struct FusionConfig {
  std::size_t buffer_capacity = 2000;    // 2 s at 1 kHz
  double image_timestamp_offset = 0.0;   // constant correction added to image stamps
  bool pin_physical_bias = false;        // camera-offset-only mode
  bool use_encoder_updates = true;       // false: vision-only (predict-only encoder steps)
};

/// Owns the belief buffer and serializes all mutations: high-rate encoder
/// measurements advance the head, delayed depth images update a past entry
/// and re-filter the buffered measurements after it. Single-threaded and
/// deterministic; callers needing concurrency wrap it behind their own
/// serialization.
class FusionEngine {
 public:
  FusionEngine(const KinematicModel& injected_model, const FilterParams& filter,
               const PixelModelParams& pixel, const CpfConfig& cpf,
               const FusionConfig& cfg = {})
      : model_(&injected_model),
        ctx_(injected_model),
        filter_(filter),
        pixel_(pixel),
        cpf_(cpf),
        cfg_(cfg) {
    filter_.validate();
    pixel_.validate();
    cpf_.validate();
    if (cfg_.buffer_capacity < 2) throw std::invalid_argument("buffer capacity too small");
  }

  const KinematicModel& model() const { return *model_; }
  bool empty() const { return buffer_.empty(); }
  std::size_t buffer_size() const { return buffer_.size(); }
  double head_timestamp() const {
    require_nonempty();
    return buffer_.back().timestamp;
  }
  double tail_timestamp() const {
    require_nonempty();
    return buffer_.front().timestamp;
  }
  const BeliefVector& head_beliefs() const {
    require_nonempty();
    return buffer_.back().beliefs;
  }

  /// The CPF seed used for a given frame; exposed so offline replays can
  /// reproduce the exact same update.
  std::uint64_t image_seed(std::int64_t frame_id) const {
    return mix_seed(cpf_.rng_seed, static_cast<std::uint64_t>(frame_id));
  }

  TrackerOutput push_encoder(const JointVector& q) {
    if (buffer_.empty()) {
      Entry e;
      e.timestamp = q.timestamp;
      e.beliefs = make_initial_beliefs(*model_, q, filter_, cfg_.pin_physical_bias);
      e.encoder = q.values;
      buffer_.push_back(std::move(e));
    } else {
      const double dt = q.timestamp - buffer_.back().timestamp;
      if (!(dt > 0.0))
        throw FusionError(FusionError::Code::OutOfOrder,
                          "encoder measurement out of order or duplicate");
      Entry e;
      e.timestamp = q.timestamp;
      e.beliefs = filter_step(buffer_.back().beliefs, q, dt, filter_,
                              /*skip_measurement_update=*/!cfg_.use_encoder_updates);
      e.encoder = q.values;
      buffer_.push_back(std::move(e));
      while (buffer_.size() > cfg_.buffer_capacity) buffer_.pop_front();
    }
    return output_from(buffer_.back());
  }

  TrackerOutput push_image(const DepthImage& image) {
    require_nonempty();
    const double ts = image.timestamp + cfg_.image_timestamp_offset;
    if (ts > buffer_.back().timestamp + 1e-12)
      throw FusionError(FusionError::Code::ImageLeadsEncoders,
                        "image is newer than the latest encoder measurement");
    if (ts < buffer_.front().timestamp - 1e-12)
      throw FusionError(FusionError::Code::DelayExceedsHorizon, "delay exceeds buffer horizon");

    // entry with the greatest timestamp <= image timestamp (exact match wins)
    std::size_t k = buffer_.size() - 1;
    while (buffer_[k].timestamp > ts) --k;

    DepthImage stamped = image;  // align to the chosen belief (<= one encoder period off)
    stamped.timestamp = buffer_[k].timestamp;
    CpfConfig cpf = cpf_;
    cpf.rng_seed = image_seed(image.frame_id);
    buffer_[k].beliefs = image_update_full(buffer_[k].beliefs, stamped, ctx_, pixel_, cpf);

    // re-filter the buffered encoder measurements after the image
    for (std::size_t i = k + 1; i < buffer_.size(); ++i) {
      const double dt = buffer_[i].timestamp - buffer_[i - 1].timestamp;
      buffer_[i].beliefs =
          filter_step(buffer_[i - 1].beliefs, {buffer_[i].encoder, buffer_[i].timestamp}, dt,
                      filter_, !cfg_.use_encoder_updates);
    }
    return output_from(buffer_.back());
  }

  TrackerOutput output() const {
    require_nonempty();
    return output_from(buffer_.back());
  }

 private:
  struct Entry {
    double timestamp = 0.0;
    BeliefVector beliefs;
    Eigen::VectorXd encoder;  // raw measurement that produced this entry
  };

  void require_nonempty() const {
    if (buffer_.empty())
      throw FusionError(FusionError::Code::EmptyBuffer, "belief buffer is empty");
  }

  TrackerOutput output_from(const Entry& e) const {
    const int n = e.beliefs.size();
    TrackerOutput out;
    out.timestamp = e.timestamp;
    out.angle_mean.resize(n);
    out.angle_std.resize(n);
    out.bias_mean.resize(n);
    out.bias_std.resize(n);
    for (int j = 0; j < n; ++j) {
      out.angle_mean[j] = e.beliefs.joints[j].mean[0];
      out.angle_std[j] = std::sqrt(std::max(e.beliefs.joints[j].cov(0, 0), 0.0));
      out.bias_mean[j] = e.beliefs.joints[j].mean[1];
      out.bias_std[j] = std::sqrt(std::max(e.beliefs.joints[j].cov(1, 1), 0.0));
    }
    out.ee_in_camera = end_effector_in_camera(*model_, {out.angle_mean, e.timestamp});
    int vi = 0;
    for (int j = 0; j < n; ++j)
      if (e.beliefs.is_virtual[j] && vi < 6) out.camera_offset[vi++] = out.angle_mean[j];
    return out;
  }

  const KinematicModel* model_;
  RenderContext ctx_;
  FilterParams filter_;
  PixelModelParams pixel_;
  CpfConfig cpf_;
  FusionConfig cfg_;
  std::deque<Entry> buffer_;
};

/// Streams a recorded dataset through the engine in arrival order (image
/// arrival = timestamp + declared delay; encoder measurements break arrival
/// ties) and collects the output of every push.
inline std::vector<TrackerOutput> track_sequence(const Dataset& ds,
                                                 const KinematicModel& injected_model,
                                                 const FilterParams& filter,
                                                 const PixelModelParams& pixel,
                                                 const CpfConfig& cpf,
                                                 const FusionConfig& cfg = {}) {
  struct Event {
    double arrival;
    int kind;  // 0 encoder, 1 image
    size_t index;
  };
  std::vector<Event> events;
  events.reserve(ds.encoders.size() + ds.images.size());
  for (size_t i = 0; i < ds.encoders.size(); ++i)
    events.push_back({ds.encoders[i].timestamp, 0, i});
  for (size_t i = 0; i < ds.images.size(); ++i)
    events.push_back({ds.images[i].timestamp + ds.images[i].delay, 1, i});
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.arrival != b.arrival) return a.arrival < b.arrival;
    return a.kind < b.kind;
  });

  FusionEngine engine(injected_model, filter, pixel, cpf, cfg);
  std::vector<TrackerOutput> out;
  out.reserve(events.size());
  for (const auto& ev : events) {
    if (ev.kind == 0)
      out.push_back(engine.push_encoder({ds.encoders[ev.index].q, ds.encoders[ev.index].timestamp}));
    else
      out.push_back(engine.push_image(ds.load_frame(ds.images[ev.index])));
  }
  return out;
}

}  // namespace chainfuse
