#pragma once

// Observation layout for two-glove + tracker input: one 48-dimensional frame
// per time step, split into six synchronous streams.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "signrec/error.hpp"

namespace signrec {

inline constexpr std::size_t kFrameDim = 48;
inline constexpr std::size_t kNumStreams = 6;

using Frame = std::array<double, kFrameDim>;

struct StreamSpec {
  std::string name;
  std::size_t dim = 0;
  std::size_t offset = 0;

  bool operator==(const StreamSpec&) const = default;
};

class StreamLayout {
 public:
  explicit StreamLayout(std::array<StreamSpec, kNumStreams> streams) : streams_(std::move(streams)) {
    std::size_t offset = 0;
    for (const auto& s : streams_) {
      if (s.dim == 0) throw InvalidModel("stream '" + s.name + "' has zero dimension");
      if (s.offset != offset)
        throw InvalidModel("stream '" + s.name + "' offset is not contiguous");
      offset += s.dim;
    }
    if (offset != kFrameDim) throw InvalidModel("stream dimensions do not sum to 48");
  }

  // Stream ids 1..6 in this order. Shape streams carry the 18 glove sensors of
  // each hand; position and orientation come from the tracker receivers.
  static const StreamLayout& standard() {
    static const StreamLayout layout({{
        {"right-shape", 18, 0},
        {"left-shape", 18, 18},
        {"right-position", 3, 36},
        {"left-position", 3, 39},
        {"right-orientation", 3, 42},
        {"left-orientation", 3, 45},
    }});
    return layout;
  }

  const StreamSpec& operator[](std::size_t s) const { return streams_.at(s); }
  std::size_t dim(std::size_t s) const { return streams_.at(s).dim; }
  std::size_t offset(std::size_t s) const { return streams_.at(s).offset; }
  const std::array<StreamSpec, kNumStreams>& streams() const { return streams_; }

  bool operator==(const StreamLayout&) const = default;

 private:
  std::array<StreamSpec, kNumStreams> streams_;
};

using StreamViews = std::array<std::span<const double>, kNumStreams>;

inline std::span<const double> stream_view(const Frame& frame, std::size_t s,
                                           const StreamLayout& layout = StreamLayout::standard()) {
  return std::span<const double>(frame).subspan(layout.offset(s), layout.dim(s));
}

inline StreamViews split_streams(const Frame& frame,
                                 const StreamLayout& layout = StreamLayout::standard()) {
  StreamViews out;
  for (std::size_t s = 0; s < kNumStreams; ++s) out[s] = stream_view(frame, s, layout);
  return out;
}

inline Frame concat_streams(const StreamViews& streams) {
  Frame frame{};
  std::size_t i = 0;
  for (const auto& s : streams) {
    if (i + s.size() > kFrameDim) throw DimensionMismatch("streams exceed frame dimension");
    std::copy(s.begin(), s.end(), frame.begin() + static_cast<std::ptrdiff_t>(i));
    i += s.size();
  }
  if (i != kFrameDim) throw DimensionMismatch("streams do not fill a frame");
  return frame;
}

inline Frame to_frame(std::span<const double> values) {
  if (values.size() != kFrameDim)
    throw DimensionMismatch("expected 48 values, got " + std::to_string(values.size()));
  Frame f;
  std::copy(values.begin(), values.end(), f.begin());
  return f;
}

// An observed gesture. `label` holds one sign name for isolated data and the
// sign sequence for sentences.
struct GestureSequence {
  std::vector<Frame> frames;
  std::vector<std::string> label;
  bool sentence = false;

  std::size_t size() const { return frames.size(); }
  bool operator==(const GestureSequence&) const = default;
};

struct NormalizationStats {
  Frame min{};
  Frame max{};

  static NormalizationStats identity() {
    NormalizationStats s;
    s.min.fill(0.0);
    s.max.fill(1.0);
    return s;
  }

  template <class Range>
  static NormalizationStats from_sequences(const Range& sequences) {
    NormalizationStats s;
    s.min.fill(std::numeric_limits<double>::infinity());
    s.max.fill(-std::numeric_limits<double>::infinity());
    std::size_t frames = 0;
    for (const GestureSequence& seq : sequences) {
      for (const Frame& f : seq.frames) {
        for (std::size_t i = 0; i < kFrameDim; ++i) {
          s.min[i] = std::min(s.min[i], f[i]);
          s.max[i] = std::max(s.max[i], f[i]);
        }
        ++frames;
      }
    }
    if (frames == 0) throw DataError("cannot compute normalization statistics from no frames");
    return s;
  }

  bool degenerate(std::size_t i) const { return !(max[i] > min[i]); }

  std::vector<std::size_t> degenerate_components() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < kFrameDim; ++i)
      if (degenerate(i)) out.push_back(i);
    return out;
  }

  bool operator==(const NormalizationStats&) const = default;
};

// Min-max scaling into [0,1]. Test-time values outside the training range are
// clamped; components with no training range map to 0.5.
inline Frame normalize_frame(std::span<const double> raw, const NormalizationStats& stats) {
  if (raw.size() != kFrameDim)
    throw DimensionMismatch("expected 48 raw values, got " + std::to_string(raw.size()));
  Frame out;
  for (std::size_t i = 0; i < kFrameDim; ++i) {
    if (stats.degenerate(i)) {
      out[i] = 0.5;
      continue;
    }
    out[i] = std::clamp((raw[i] - stats.min[i]) / (stats.max[i] - stats.min[i]), 0.0, 1.0);
  }
  return out;
}

inline GestureSequence normalize_sequence(const GestureSequence& raw, const NormalizationStats& stats) {
  GestureSequence out;
  out.label = raw.label;
  out.sentence = raw.sentence;
  out.frames.reserve(raw.frames.size());
  for (const Frame& f : raw.frames) out.frames.push_back(normalize_frame(f, stats));
  return out;
}

// Pose of one tracker receiver in transmitter coordinates.
struct ReceiverPose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();

  void validate(double tol = 1e-6) const {
    const Eigen::Matrix3d gram = orientation.transpose() * orientation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol)
      throw InvalidModel("receiver orientation is not orthonormal");
    if (orientation.determinant() < 0.0) throw InvalidModel("receiver orientation is a reflection");
  }
};

struct BodyFrameFeatures {
  std::array<double, 3> position{};
  // Z-Y-X Euler angles (yaw, pitch, roll) in radians.
  std::array<double, 3> orientation{};
};

inline std::array<double, 3> euler_zyx(const Eigen::Matrix3d& r) {
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  double yaw, roll;
  if (std::abs(r(2, 0)) < 1.0 - 1e-12) {
    yaw = std::atan2(r(1, 0), r(0, 0));
    roll = std::atan2(r(2, 1), r(2, 2));
  } else {
    // Gimbal lock: fold everything into yaw.
    yaw = std::atan2(-r(0, 1), r(1, 1));
    roll = 0.0;
  }
  return {yaw, pitch, roll};
}

inline Eigen::Matrix3d rotation_zyx(const std::array<double, 3>& angles) {
  return (Eigen::AngleAxisd(angles[0], Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(angles[1], Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(angles[2], Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

// Expresses a hand receiver pose relative to the thorax receiver.
inline BodyFrameFeatures to_body_frame(const ReceiverPose& hand, const ReceiverPose& thorax) {
  hand.validate();
  thorax.validate();
  const Eigen::Matrix3d to_body = thorax.orientation.transpose();
  const Eigen::Vector3d p = to_body * (hand.position - thorax.position);
  BodyFrameFeatures out;
  out.position = {p.x(), p.y(), p.z()};
  out.orientation = euler_zyx(to_body * hand.orientation);
  return out;
}

}  // namespace signrec
