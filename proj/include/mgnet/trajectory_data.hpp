#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mgnet/tensor.hpp"

namespace mgnet {

/// Malformed annotations; the message names the file and the record.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyDatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Center-size box in pixels.
struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;

  bool valid() const;
  void validate() const;
  Eigen::RowVector4d as_row() const { return {cx, cy, w, h}; }
  static BoundingBox from_row(const Eigen::Ref<const Eigen::RowVector4d>& r) { return {r(0), r(1), r(2), r(3)}; }
};

struct Corners {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
};

Corners cxcywh_to_corners(const BoundingBox& b);
BoundingBox corners_to_cxcywh(const Corners& c);

/// One pedestrian's annotation stream.
struct Track {
  std::string video_id;
  std::string track_id;
  std::vector<int> frames;
  std::vector<BoundingBox> boxes;
  double fps = 30.0;

  std::size_t size() const { return frames.size(); }
  void validate() const;
};

enum class TrackFormat { jaad_xml, pie, jsonl };

TrackFormat parse_track_format(std::string_view name);
std::string_view to_string(TrackFormat format);

/// Reads annotations. `path` may be a file or a directory (searched
/// recursively for *.xml, *_annt.xml or *.jsonl respectively).
std::vector<Track> load_tracks(const std::filesystem::path& path, TrackFormat format);

/// Canonical interchange: one JSON object per frame,
/// {video_id, track_id, frame, cx, cy, w, h}.
void write_tracks_jsonl(const std::filesystem::path& path, const std::vector<Track>& tracks);

/// Maps between pixel boxes and offsets from the anchor scaled by the image size.
struct NormTransform {
  BoundingBox anchor;
  double image_w = 1.0;
  double image_h = 1.0;

  BoxSequence normalize(const BoxSequence& pixels) const;
  BoxSequence denormalize(const BoxSequence& normalized) const;
};

struct TrajectoryWindow {
  std::string video_id;
  std::string track_id;
  int frame = 0;             // frame index of the last observed step
  BoxSequence observed;      // tau x 4
  BoxSequence future;        // rho x 4
  BoundingBox anchor;        // last observed box, pixels
  NormTransform transform;   // meaningful when `normalized`
  bool normalized = false;

  Index tau() const { return observed.rows(); }
  Index rho() const { return future.rows(); }
};

/// Windows sharing (tau, rho).
struct TrajectoryBatch {
  std::vector<TrajectoryWindow> windows;

  std::size_t size() const { return windows.size(); }
  void validate() const;
};

/// Splits a track wherever consecutive frame indices differ by more than one.
std::vector<Track> contiguous_segments(const Track& track);

/// Sliding windows over every contiguous segment; a segment of length L yields
/// floor((L - tau - rho) / stride) + 1 windows, or none when L < tau + rho.
std::vector<TrajectoryWindow> window_tracks(const std::vector<Track>& tracks, int tau, int rho, int stride);

TrajectoryWindow normalize_window(const TrajectoryWindow& window, double image_w, double image_h);
TrajectoryWindow denormalize_window(const TrajectoryWindow& window);

struct StageGoalTargets {
  Index k = 1;
  BoxSequence goals;          // k x 4
  std::vector<Index> times;   // (j + 1) * rho / k
};

StageGoalTargets stage_goal_targets(const BoxSequence& future, Index k);

struct SplitSpec {
  double train_ratio = 0.5;
  double test_ratio = 0.4;
  double val_ratio = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Video-level partition.
struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::vector<std::string> val;
  std::uint64_t seed = 0;
};

struct TrackSplit {
  std::vector<Track> train;
  std::vector<Track> test;
  std::vector<Track> val;
  SplitManifest manifest;
};

SplitManifest split_videos(const std::vector<Track>& tracks, const SplitSpec& spec);
TrackSplit apply_split(const std::vector<Track>& tracks, const SplitManifest& manifest);
TrackSplit split_dataset(const std::vector<Track>& tracks, const SplitSpec& spec);

std::string split_manifest_json(const SplitManifest& manifest);
void write_split_manifest(const std::filesystem::path& path, const SplitManifest& manifest);
SplitManifest read_split_manifest(const std::filesystem::path& path);

enum class Motion { constant_velocity, turn, stop_go };

Motion parse_motion(std::string_view name);
std::string_view to_string(Motion motion);

struct SyntheticConfig {
  int n_tracks = 100;
  int length = 90;
  Motion motion = Motion::constant_velocity;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  double turn_angle_deg = 90.0;  // signed, applied at the track midpoint
  double speed_min = 1.5;        // pixels / frame
  double speed_max = 4.0;
  double box_w_min = 30.0;
  double box_w_max = 80.0;
  double aspect = 2.5;           // h / w
  int stop_length = 20;          // frames standing still in stop-go tracks
  double image_w = 1920.0;
  double image_h = 1080.0;
  double fps = 30.0;
};

std::vector<Track> generate_synthetic(const SyntheticConfig& config);

}  // namespace mgnet
