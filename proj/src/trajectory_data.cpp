#include "mgnet/trajectory_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <json.hpp>

#include "mgnet/goal_evaluator.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mgnet {

bool BoundingBox::valid() const {
  return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) && w > 0.0 && h > 0.0;
}

void BoundingBox::validate() const {
  if (!valid()) {
    std::ostringstream os;
    os << "invalid bounding box (" << cx << ", " << cy << ", " << w << ", " << h << ")";
    throw std::invalid_argument(os.str());
  }
}

Corners cxcywh_to_corners(const BoundingBox& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

BoundingBox corners_to_cxcywh(const Corners& c) {
  return {(c.x1 + c.x2) / 2.0, (c.y1 + c.y2) / 2.0, c.x2 - c.x1, c.y2 - c.y1};
}

void Track::validate() const {
  if (frames.size() != boxes.size())
    throw std::invalid_argument("track " + track_id + ": frame and box counts differ");
  if (!(fps > 0.0)) throw std::invalid_argument("track " + track_id + ": fps must be positive");
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i] <= frames[i - 1])
      throw std::invalid_argument("track " + track_id + ": frames must be strictly increasing");
  for (const auto& b : boxes) b.validate();
}

TrackFormat parse_track_format(std::string_view name) {
  if (name == "jaad-xml" || name == "jaad") return TrackFormat::jaad_xml;
  if (name == "pie") return TrackFormat::pie;
  if (name == "jsonl") return TrackFormat::jsonl;
  throw std::invalid_argument("unknown track format '" + std::string(name) + "' (expected jaad-xml, pie or jsonl)");
}

std::string_view to_string(TrackFormat format) {
  switch (format) {
    case TrackFormat::jaad_xml:
      return "jaad-xml";
    case TrackFormat::pie:
      return "pie";
    case TrackFormat::jsonl:
      return "jsonl";
  }
  return "unknown";
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> collect_files(const fs::path& path, std::string_view suffix) {
  if (!fs::exists(path)) throw std::runtime_error("path does not exist: " + path.string());
  std::vector<fs::path> files;
  if (fs::is_regular_file(path)) {
    files.push_back(path);
    return files;
  }
  for (const auto& entry : fs::recursive_directory_iterator(path))
    if (entry.is_regular_file() && ends_with(entry.path().filename().string(), suffix)) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

struct TrackKey {
  std::string video_id;
  std::string track_id;
  auto operator<=>(const TrackKey&) const = default;
};

// Groups per-frame records into tracks, sorted by frame, in first-seen order.
class TrackAssembler {
 public:
  void add(const std::string& video, const std::string& track, int frame, const BoundingBox& box,
           const std::string& where) {
    TrackKey key{video, track};
    auto it = index_.find(key);
    if (it == index_.end()) {
      it = index_.emplace(key, tracks_.size()).first;
      Track t;
      t.video_id = video;
      t.track_id = track;
      tracks_.push_back(std::move(t));
      seen_.emplace_back();
    }
    if (!seen_[it->second].insert(frame).second)
      throw ParseError(where + ": duplicate frame " + std::to_string(frame) + " for track " + track);
    tracks_[it->second].frames.push_back(frame);
    tracks_[it->second].boxes.push_back(box);
  }

  std::vector<Track> finish() {
    for (auto& t : tracks_) {
      std::vector<std::size_t> order(t.frames.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t.frames[a] < t.frames[b]; });
      Track sorted = t;
      for (std::size_t i = 0; i < order.size(); ++i) {
        sorted.frames[i] = t.frames[order[i]];
        sorted.boxes[i] = t.boxes[order[i]];
      }
      t = std::move(sorted);
    }
    return std::move(tracks_);
  }

 private:
  std::map<TrackKey, std::size_t> index_;
  std::vector<Track> tracks_;
  std::vector<std::set<int>> seen_;
};

std::vector<Track> load_jsonl(const fs::path& path) {
  TrackAssembler assembler;
  for (const auto& file : collect_files(path, ".jsonl")) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const std::string where = file.string() + ":" + std::to_string(line_no);
      try {
        const json rec = json::parse(line);
        BoundingBox b{rec.at("cx").get<double>(), rec.at("cy").get<double>(), rec.at("w").get<double>(),
                      rec.at("h").get<double>()};
        if (!b.valid()) throw ParseError(where + ": invalid box (width and height must be positive and finite)");
        const auto video = rec.at("video_id").get<std::string>();
        const auto track = rec.at("track_id").get<std::string>();
        assembler.add(video, track, rec.at("frame").get<int>(), b, where);
      } catch (const json::exception& e) {
        throw ParseError(where + ": " + e.what());
      }
    }
  }
  return assembler.finish();
}

double xml_attr(const boost::property_tree::ptree& box, const char* name, const std::string& where) {
  const auto v = box.get_optional<double>(std::string("<xmlattr>.") + name);
  if (!v) throw ParseError(where + ": box lacks attribute '" + name + "'");
  return *v;
}

// CVAT-style annotation files used by both JAAD and PIE.
// PIE reuses video names across sets, so its ids carry the set as `prefix`.
void load_cvat_file(const fs::path& file, const std::string& video_id, const std::string& prefix,
                    TrackAssembler& assembler) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_xml(file.string(), tree);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  const auto root = tree.get_child_optional("annotations");
  if (!root) throw ParseError(file.string() + ": missing <annotations> root");
  const std::string video = prefix + root->get<std::string>("meta.task.name", video_id);
  int track_index = 0;
  for (const auto& [tag, track] : *root) {
    if (tag != "track") continue;
    const std::string label = track.get<std::string>("<xmlattr>.label", "");
    ++track_index;
    if (label != "pedestrian" && label != "ped") continue;
    std::string track_id = "track" + std::to_string(track_index);
    int box_index = 0;
    for (const auto& [btag, box] : track) {
      if (btag != "box") continue;
      ++box_index;
      const std::string where = file.string() + ": track " + std::to_string(track_index) + " box " +
                                std::to_string(box_index);
      if (box.get<int>("<xmlattr>.outside", 0) == 1) continue;
      for (const auto& [atag, attr] : box)
        if (atag == "attribute" && attr.get<std::string>("<xmlattr>.name", "") == "id")
          track_id = attr.get_value<std::string>();
      const Corners c{xml_attr(box, "xtl", where), xml_attr(box, "ytl", where), xml_attr(box, "xbr", where),
                      xml_attr(box, "ybr", where)};
      const BoundingBox b = corners_to_cxcywh(c);
      if (!b.valid()) throw ParseError(where + ": invalid box (width and height must be positive and finite)");
      const auto frame = box.get_optional<int>("<xmlattr>.frame");
      if (!frame) throw ParseError(where + ": box lacks attribute 'frame'");
      assembler.add(video, track_id, *frame, b, where);
    }
  }
}

std::vector<Track> load_jaad(const fs::path& path) {
  TrackAssembler assembler;
  for (const auto& file : collect_files(path, ".xml")) load_cvat_file(file, file.stem().string(), "", assembler);
  return assembler.finish();
}

std::vector<Track> load_pie(const fs::path& path) {
  TrackAssembler assembler;
  for (const auto& file : collect_files(path, "_annt.xml")) {
    std::string stem = file.stem().string();
    if (ends_with(stem, "_annt")) stem.resize(stem.size() - 5);
    const std::string set = file.parent_path().filename().string();
    load_cvat_file(file, stem, set.empty() ? "" : set + "/", assembler);
  }
  return assembler.finish();
}

}  // namespace

std::vector<Track> load_tracks(const fs::path& path, TrackFormat format) {
  std::vector<Track> tracks;
  switch (format) {
    case TrackFormat::jsonl:
      tracks = load_jsonl(path);
      break;
    case TrackFormat::jaad_xml:
      tracks = load_jaad(path);
      break;
    case TrackFormat::pie:
      tracks = load_pie(path);
      break;
  }
  if (tracks.empty()) throw EmptyDatasetError("no pedestrian tracks found in " + path.string());
  for (const auto& t : tracks) t.validate();
  return tracks;
}

void write_tracks_jsonl(const fs::path& path, const std::vector<Track>& tracks) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : tracks) {
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
      json rec;
      rec["video_id"] = t.video_id;
      rec["track_id"] = t.track_id;
      rec["frame"] = t.frames[i];
      rec["cx"] = t.boxes[i].cx;
      rec["cy"] = t.boxes[i].cy;
      rec["w"] = t.boxes[i].w;
      rec["h"] = t.boxes[i].h;
      out << rec.dump() << '\n';
    }
  }
}

BoxSequence NormTransform::normalize(const BoxSequence& pixels) const {
  BoxSequence out = pixels;
  out.rowwise() -= anchor.as_row();
  out.col(0) /= image_w;
  out.col(1) /= image_h;
  out.col(2) /= image_w;
  out.col(3) /= image_h;
  return out;
}

BoxSequence NormTransform::denormalize(const BoxSequence& normalized) const {
  BoxSequence out = normalized;
  out.col(0) *= image_w;
  out.col(1) *= image_h;
  out.col(2) *= image_w;
  out.col(3) *= image_h;
  out.rowwise() += anchor.as_row();
  return out;
}

void TrajectoryBatch::validate() const {
  if (windows.empty()) throw std::invalid_argument("trajectory batch must hold at least one window");
  for (const auto& w : windows)
    if (w.tau() != windows.front().tau() || w.rho() != windows.front().rho())
      throw std::invalid_argument("trajectory batch windows must share (tau, rho)");
}

std::vector<Track> contiguous_segments(const Track& track) {
  std::vector<Track> segments;
  for (std::size_t i = 0; i < track.frames.size(); ++i) {
    if (i == 0 || track.frames[i] - track.frames[i - 1] > 1) {
      Track s;
      s.video_id = track.video_id;
      s.track_id = track.track_id;
      s.fps = track.fps;
      segments.push_back(std::move(s));
    }
    segments.back().frames.push_back(track.frames[i]);
    segments.back().boxes.push_back(track.boxes[i]);
  }
  return segments;
}

std::vector<TrajectoryWindow> window_tracks(const std::vector<Track>& tracks, int tau, int rho, int stride) {
  if (tau < 1 || rho < 1 || stride < 1) throw std::invalid_argument("window_tracks: tau, rho and stride must be >= 1");
  std::vector<TrajectoryWindow> windows;
  for (const auto& track : tracks) {
    for (const auto& seg : contiguous_segments(track)) {
      const int length = static_cast<int>(seg.size());
      for (int start = 0; start + tau + rho <= length; start += stride) {
        TrajectoryWindow w;
        w.video_id = seg.video_id;
        w.track_id = seg.track_id;
        w.frame = seg.frames[static_cast<std::size_t>(start + tau - 1)];
        w.observed.resize(tau, 4);
        w.future.resize(rho, 4);
        for (int i = 0; i < tau; ++i) w.observed.row(i) = seg.boxes[static_cast<std::size_t>(start + i)].as_row();
        for (int i = 0; i < rho; ++i)
          w.future.row(i) = seg.boxes[static_cast<std::size_t>(start + tau + i)].as_row();
        w.anchor = seg.boxes[static_cast<std::size_t>(start + tau - 1)];
        windows.push_back(std::move(w));
      }
    }
  }
  return windows;
}

TrajectoryWindow normalize_window(const TrajectoryWindow& window, double image_w, double image_h) {
  if (!(image_w > 0.0) || !(image_h > 0.0)) throw std::invalid_argument("normalize_window: image size must be positive");
  if (window.normalized) throw std::logic_error("normalize_window: window is already normalized");
  TrajectoryWindow out = window;
  out.transform = NormTransform{window.anchor, image_w, image_h};
  out.observed = out.transform.normalize(window.observed);
  out.future = out.transform.normalize(window.future);
  out.normalized = true;
  return out;
}

TrajectoryWindow denormalize_window(const TrajectoryWindow& window) {
  if (!window.normalized) throw std::logic_error("denormalize_window: window is not normalized");
  TrajectoryWindow out = window;
  out.observed = window.transform.denormalize(window.observed);
  out.future = window.transform.denormalize(window.future);
  out.normalized = false;
  return out;
}

StageGoalTargets stage_goal_targets(const BoxSequence& future, Index k) {
  StageGoalTargets t;
  t.k = k;
  t.times = stage_times(future.rows(), k);
  t.goals.resize(k, 4);
  for (Index j = 0; j < k; ++j) t.goals.row(j) = future.row(t.times[static_cast<std::size_t>(j)] - 1);
  return t;
}

void SplitSpec::validate() const {
  if (train_ratio < 0.0 || test_ratio < 0.0 || val_ratio < 0.0)
    throw std::invalid_argument("split ratios must be non-negative");
  if (std::abs(train_ratio + test_ratio + val_ratio - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must sum to 1");
}

SplitManifest split_videos(const std::vector<Track>& tracks, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::string> videos;
  std::set<std::string> seen;
  for (const auto& t : tracks)
    if (seen.insert(t.video_id).second) videos.push_back(t.video_id);
  std::sort(videos.begin(), videos.end());

  const int n = static_cast<int>(videos.size());
  const int wanted = (spec.train_ratio > 0) + (spec.test_ratio > 0) + (spec.val_ratio > 0);
  if (n < wanted)
    throw std::invalid_argument("split_dataset: " + std::to_string(n) + " videos cannot fill " +
                                std::to_string(wanted) + " splits");
  auto count = [n](double ratio) { return ratio > 0.0 ? std::max(1, static_cast<int>(std::lround(ratio * n))) : 0; };
  const int n_val = count(spec.val_ratio);
  const int n_test = count(spec.test_ratio);
  const int n_train = n - n_val - n_test;
  if (n_train < (spec.train_ratio > 0.0 ? 1 : 0))
    throw std::invalid_argument("split_dataset: too few videos for the requested ratios");

  std::mt19937_64 rng(spec.seed);
  std::shuffle(videos.begin(), videos.end(), rng);
  SplitManifest m;
  m.seed = spec.seed;
  m.train.assign(videos.begin(), videos.begin() + n_train);
  m.test.assign(videos.begin() + n_train, videos.begin() + n_train + n_test);
  m.val.assign(videos.begin() + n_train + n_test, videos.end());
  for (auto* part : {&m.train, &m.test, &m.val}) std::sort(part->begin(), part->end());
  return m;
}

TrackSplit apply_split(const std::vector<Track>& tracks, const SplitManifest& manifest) {
  TrackSplit s;
  s.manifest = manifest;
  const std::set<std::string> train(manifest.train.begin(), manifest.train.end());
  const std::set<std::string> test(manifest.test.begin(), manifest.test.end());
  const std::set<std::string> val(manifest.val.begin(), manifest.val.end());
  for (const auto& t : tracks) {
    if (train.count(t.video_id))
      s.train.push_back(t);
    else if (test.count(t.video_id))
      s.test.push_back(t);
    else if (val.count(t.video_id))
      s.val.push_back(t);
    else
      throw std::invalid_argument("split manifest does not list video " + t.video_id);
  }
  return s;
}

TrackSplit split_dataset(const std::vector<Track>& tracks, const SplitSpec& spec) {
  return apply_split(tracks, split_videos(tracks, spec));
}

std::string split_manifest_json(const SplitManifest& manifest) {
  json j;
  j["seed"] = manifest.seed;
  j["train"] = manifest.train;
  j["test"] = manifest.test;
  j["val"] = manifest.val;
  return j.dump(2) + "\n";
}

void write_split_manifest(const fs::path& path, const SplitManifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << split_manifest_json(manifest);
}

SplitManifest read_split_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split manifest " + path.string());
  try {
    const json j = json::parse(in);
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train = j.at("train").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Motion parse_motion(std::string_view name) {
  if (name == "constant-velocity" || name == "cv") return Motion::constant_velocity;
  if (name == "turn") return Motion::turn;
  if (name == "stop-go") return Motion::stop_go;
  throw std::invalid_argument("unknown motion '" + std::string(name) + "' (expected constant-velocity, turn, stop-go)");
}

std::string_view to_string(Motion motion) {
  switch (motion) {
    case Motion::constant_velocity:
      return "constant-velocity";
    case Motion::turn:
      return "turn";
    case Motion::stop_go:
      return "stop-go";
  }
  return "unknown";
}

std::vector<Track> generate_synthetic(const SyntheticConfig& config) {
  if (config.n_tracks < 0 || config.length < 1) throw std::invalid_argument("synthetic: invalid track count or length");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double turn = config.turn_angle_deg * std::numbers::pi / 180.0;
  const int mid = config.length / 2;
  const int stop_start = config.length / 3;

  std::vector<Track> tracks;
  for (int i = 0; i < config.n_tracks; ++i) {
    char buf[32];
    Track t;
    std::snprintf(buf, sizeof buf, "synth_%05d", i);
    t.video_id = buf;
    std::snprintf(buf, sizeof buf, "ped_%05d", i);
    t.track_id = buf;
    t.fps = config.fps;

    const double heading = 2.0 * std::numbers::pi * unit(rng);
    const double speed = config.speed_min + (config.speed_max - config.speed_min) * unit(rng);
    const double w = config.box_w_min + (config.box_w_max - config.box_w_min) * unit(rng);
    const double h = config.aspect * w;
    Eigen::Vector2d p(config.image_w * (0.25 + 0.5 * unit(rng)), config.image_h * (0.25 + 0.5 * unit(rng)));
    Eigen::Vector2d v(speed * std::cos(heading), speed * std::sin(heading));

    for (int f = 0; f < config.length; ++f) {
      if (f > 0) {
        Eigen::Vector2d step = v;
        if (config.motion == Motion::turn && f > mid) step = Eigen::Rotation2Dd(turn) * v;
        if (config.motion == Motion::stop_go && f > stop_start && f <= stop_start + config.stop_length)
          step.setZero();
        p += step;
      }
      BoundingBox b{p.x(), p.y(), w, h};
      if (config.noise_sigma > 0.0) {
        b.cx += config.noise_sigma * noise(rng);
        b.cy += config.noise_sigma * noise(rng);
        b.w = std::max(1.0, b.w + config.noise_sigma * noise(rng));
        b.h = std::max(1.0, b.h + config.noise_sigma * noise(rng));
      }
      t.frames.push_back(f);
      t.boxes.push_back(b);
    }
    tracks.push_back(std::move(t));
  }
  return tracks;
}

}  // namespace mgnet
