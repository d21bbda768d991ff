#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mgnet/evaluation.hpp"

namespace mgnet {

/// Everything a command needs, serialized next to every output.
struct RunConfig {
  std::filesystem::path data_path;
  TrackFormat format = TrackFormat::jsonl;
  double image_w = 1920.0;
  double image_h = 1080.0;
  double fps = 30.0;
  int stride = 1;
  SplitSpec split;
  ModelConfig model;
  TrainConfig train;
  std::string precision = "float32";
  std::filesystem::path out_dir = "runs";
  std::vector<std::uint64_t> seeds{0};
  int samples = 0;

  void validate() const;
};

/// Flattened "section.key" -> raw value text (quotes stripped from strings).
using KeyValues = std::map<std::string, std::string>;

/// Parses `[section]` headers and `key = value` lines; `#` starts a comment.
KeyValues parse_key_values(const std::string& text, const std::string& source = "<config>");

/// Applies values on top of `config`. Unknown keys and malformed values throw.
void apply_key_values(RunConfig& config, const KeyValues& values);

RunConfig load_run_config(const std::filesystem::path& path);
std::string to_toml(const RunConfig& config);
/// Writes `dir`/run_config.toml.
void write_run_config(const std::filesystem::path& dir, const RunConfig& config);

std::vector<Index> parse_index_list(const std::string& text);

struct PreparedData {
  std::vector<Track> tracks;
  TrackSplit split;
  ExperimentData windows;  // pixel space
};

/// Resolves the dataset (a directory holding tracks.jsonl is accepted for the
/// jsonl format), splits by video (reusing split.json beside the data when
/// present) and windows every split.
PreparedData prepare_data(const RunConfig& config, const std::string& name);

}  // namespace mgnet
