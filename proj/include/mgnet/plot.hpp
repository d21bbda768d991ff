#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mgnet/evaluation.hpp"

namespace mgnet {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kPastColor{31, 119, 180};
inline constexpr Rgb kTruthColor{255, 127, 14};
inline constexpr Rgb kPredColor{44, 160, 44};
inline constexpr Rgb kBackground{255, 255, 255};

/// 8-bit RGB raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, Rgb fill);
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  std::size_t count(Rgb c) const;
};

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// One sample to draw, all boxes in pixels.
struct PlotRecord {
  std::string name;
  BoxSequence past;
  BoxSequence truth;
  BoxSequence pred;
};

/// Centroid polylines (past, truth, prediction), boxes at 0.5/1.0/1.5 s for
/// truth and prediction, and a legend.
Image render_trajectory(const PlotRecord& record, int width = 640, int height = 480, double fps = 30.0);

/// Writes one PNG per record as <index>_<name>.png and returns the paths.
std::vector<std::filesystem::path> plot_trajectories(const std::vector<PlotRecord>& records,
                                                     const std::filesystem::path& out_dir, double fps = 30.0);

/// Pairs prediction records with pixel windows by (video_id, track_id, t).
/// Throws when a prediction has no window or the lengths disagree.
std::vector<PlotRecord> match_predictions(const std::vector<TrajectoryWindow>& windows,
                                          const std::vector<PredictionRecord>& predictions);

}  // namespace mgnet
