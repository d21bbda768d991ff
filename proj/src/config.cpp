#include "mgnet/config.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace mgnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config: " + key + " expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(std::string v) {
  if (!v.empty() && v.front() == '[') v = v.substr(1);
  if (!v.empty() && v.back() == ']') v.pop_back();
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> s{
      {"data.path", [](RunConfig& c, auto&, auto& v) { c.data_path = v; }},
      {"data.format", [](RunConfig& c, auto&, auto& v) { c.format = parse_track_format(v); }},
      {"data.image_w", [](RunConfig& c, auto& k, auto& v) { c.image_w = to_double(k, v); }},
      {"data.image_h", [](RunConfig& c, auto& k, auto& v) { c.image_h = to_double(k, v); }},
      {"data.fps", [](RunConfig& c, auto& k, auto& v) { c.fps = to_double(k, v); }},
      {"data.stride", [](RunConfig& c, auto& k, auto& v) { c.stride = static_cast<int>(to_int(k, v)); }},
      {"data.split_train", [](RunConfig& c, auto& k, auto& v) { c.split.train_ratio = to_double(k, v); }},
      {"data.split_test", [](RunConfig& c, auto& k, auto& v) { c.split.test_ratio = to_double(k, v); }},
      {"data.split_val", [](RunConfig& c, auto& k, auto& v) { c.split.val_ratio = to_double(k, v); }},
      {"data.split_seed",
       [](RunConfig& c, auto& k, auto& v) { c.split.seed = static_cast<std::uint64_t>(to_int(k, v)); }},
      {"model.tau", [](RunConfig& c, auto& k, auto& v) { c.model.tau = to_int(k, v); }},
      {"model.rho", [](RunConfig& c, auto& k, auto& v) { c.model.rho = to_int(k, v); }},
      {"model.k", [](RunConfig& c, auto& k, auto& v) { c.model.k = to_int(k, v); }},
      {"model.attention", [](RunConfig& c, auto& k, auto& v) { c.model.attention = to_bool(k, v); }},
      {"model.evaluator", [](RunConfig& c, auto& k, auto& v) { c.model.evaluator = to_bool(k, v); }},
      {"model.hidden_dim", [](RunConfig& c, auto& k, auto& v) { c.model.hidden_dim = to_int(k, v); }},
      {"model.latent_dim", [](RunConfig& c, auto& k, auto& v) { c.model.latent_dim = to_int(k, v); }},
      {"model.box_embed_dim", [](RunConfig& c, auto& k, auto& v) { c.model.box_embed_dim = to_int(k, v); }},
      {"model.embed_dim", [](RunConfig& c, auto& k, auto& v) { c.model.attention_config.embed_dim = to_int(k, v); }},
      {"model.num_heads", [](RunConfig& c, auto& k, auto& v) { c.model.attention_config.num_heads = to_int(k, v); }},
      {"model.num_layers",
       [](RunConfig& c, auto& k, auto& v) { c.model.attention_config.num_layers = to_int(k, v); }},
      {"model.attention_dim",
       [](RunConfig& c, auto& k, auto& v) { c.model.attention_config.output_dim = to_int(k, v); }},
      {"model.positional",
       [](RunConfig& c, auto& k, auto& v) { c.model.attention_config.positional = to_bool(k, v); }},
      {"model.batch_norm", [](RunConfig& c, auto& k, auto& v) { c.model.batch_norm = to_bool(k, v); }},
      {"model.auxiliary_coarse_loss",
       [](RunConfig& c, auto& k, auto& v) { c.model.auxiliary_coarse_loss = to_bool(k, v); }},
      {"train.lr", [](RunConfig& c, auto& k, auto& v) { c.train.lr = to_double(k, v); }},
      {"train.batch_size",
       [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = static_cast<std::size_t>(to_int(k, v)); }},
      {"train.epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = static_cast<int>(to_int(k, v)); }},
      {"train.plateau_factor", [](RunConfig& c, auto& k, auto& v) { c.train.plateau_factor = to_double(k, v); }},
      {"train.plateau_patience",
       [](RunConfig& c, auto& k, auto& v) { c.train.plateau_patience = static_cast<int>(to_int(k, v)); }},
      {"train.dropout", [](RunConfig& c, auto& k, auto& v) { c.train.dropout = to_double(k, v); }},
      {"train.clip_norm", [](RunConfig& c, auto& k, auto& v) { c.train.clip_norm = to_double(k, v); }},
      {"train.recalibrate_bn", [](RunConfig& c, auto& k, auto& v) { c.train.recalibrate_bn = to_bool(k, v); }},
      {"train.precision", [](RunConfig& c, auto&, auto& v) { c.precision = v; }},
      {"run.out_dir", [](RunConfig& c, auto&, auto& v) { c.out_dir = v; }},
      {"run.samples", [](RunConfig& c, auto& k, auto& v) { c.samples = static_cast<int>(to_int(k, v)); }},
      {"run.seeds",
       [](RunConfig& c, auto& k, auto& v) {
         c.seeds.clear();
         for (const auto& item : split_list(v)) c.seeds.push_back(static_cast<std::uint64_t>(to_int(k, item)));
       }},
  };
  return s;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  if (!(image_w > 0.0) || !(image_h > 0.0)) throw std::invalid_argument("config: image size must be positive");
  if (!(fps > 0.0)) throw std::invalid_argument("config: fps must be positive");
  if (stride < 1) throw std::invalid_argument("config: stride must be at least 1");
  if (precision != "float32" && precision != "float64")
    throw std::invalid_argument("config: precision must be float32 or float64");
  if (seeds.empty()) throw std::invalid_argument("config: at least one seed is required");
  if (samples < 0) throw std::invalid_argument("config: samples must be non-negative");
  split.validate();
  model.validate();
  train.validate();
}

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues out;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

void apply_key_values(RunConfig& config, const KeyValues& values) {
  for (const auto& [key, value] : values) {
    auto it = setters().find(key);
    if (it == setters().end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(config, key, value);
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  apply_key_values(c, parse_key_values(ss.str(), path.string()));
  return c;
}

std::string to_toml(const RunConfig& c) {
  std::ostringstream os;
  os << "[data]\n"
     << "path = " << quote(c.data_path.string()) << "\n"
     << "format = " << quote(std::string(to_string(c.format))) << "\n"
     << "image_w = " << num(c.image_w) << "\n"
     << "image_h = " << num(c.image_h) << "\n"
     << "fps = " << num(c.fps) << "\n"
     << "stride = " << c.stride << "\n"
     << "split_train = " << num(c.split.train_ratio) << "\n"
     << "split_test = " << num(c.split.test_ratio) << "\n"
     << "split_val = " << num(c.split.val_ratio) << "\n"
     << "split_seed = " << c.split.seed << "\n\n";
  const auto b = [](bool v) { return v ? "true" : "false"; };
  os << "[model]\n"
     << "tau = " << c.model.tau << "\n"
     << "rho = " << c.model.rho << "\n"
     << "k = " << c.model.k << "\n"
     << "attention = " << b(c.model.attention) << "\n"
     << "evaluator = " << b(c.model.evaluator) << "\n"
     << "hidden_dim = " << c.model.hidden_dim << "\n"
     << "latent_dim = " << c.model.latent_dim << "\n"
     << "box_embed_dim = " << c.model.box_embed_dim << "\n"
     << "embed_dim = " << c.model.attention_config.embed_dim << "\n"
     << "num_heads = " << c.model.attention_config.num_heads << "\n"
     << "num_layers = " << c.model.attention_config.num_layers << "\n"
     << "attention_dim = " << c.model.attention_config.output_dim << "\n"
     << "positional = " << b(c.model.attention_config.positional) << "\n"
     << "batch_norm = " << b(c.model.batch_norm) << "\n"
     << "auxiliary_coarse_loss = " << b(c.model.auxiliary_coarse_loss) << "\n\n";
  os << "[train]\n"
     << "lr = " << num(c.train.lr) << "\n"
     << "batch_size = " << c.train.batch_size << "\n"
     << "epochs = " << c.train.epochs << "\n"
     << "plateau_factor = " << num(c.train.plateau_factor) << "\n"
     << "plateau_patience = " << c.train.plateau_patience << "\n"
     << "dropout = " << num(c.train.dropout) << "\n"
     << "clip_norm = " << num(c.train.clip_norm) << "\n"
     << "recalibrate_bn = " << (c.train.recalibrate_bn ? "true" : "false") << "\n"
     << "precision = " << quote(c.precision) << "\n\n";
  os << "[run]\n"
     << "out_dir = " << quote(c.out_dir.string()) << "\n"
     << "samples = " << c.samples << "\n"
     << "seeds = [";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? ", " : "") << c.seeds[i];
  os << "]\n";
  return os.str();
}

void write_run_config(const fs::path& dir, const RunConfig& config) {
  fs::create_directories(dir);
  std::ofstream out(dir / "run_config.toml", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "run_config.toml").string());
  out << to_toml(config);
}

std::vector<Index> parse_index_list(const std::string& text) {
  std::vector<Index> out;
  for (const auto& item : split_list(text)) out.push_back(static_cast<Index>(to_int("list", item)));
  if (out.empty()) throw std::invalid_argument("empty list '" + text + "'");
  return out;
}

PreparedData prepare_data(const RunConfig& config, const std::string& name) {
  fs::path path = config.data_path;
  if (path.empty()) throw std::invalid_argument("no dataset given (use --data or MGNET_DATA_DIR)");
  if (!fs::exists(path)) throw std::runtime_error("dataset not found: " + path.string());
  fs::path manifest;
  if (fs::is_directory(path)) {
    if (fs::exists(path / "split.json")) manifest = path / "split.json";
    if (config.format == TrackFormat::jsonl && fs::exists(path / "tracks.jsonl")) path = path / "tracks.jsonl";
  } else if (fs::exists(path.parent_path() / "split.json")) {
    manifest = path.parent_path() / "split.json";
  }
  PreparedData d;
  d.tracks = load_tracks(path, config.format);
  d.split = manifest.empty() ? split_dataset(d.tracks, config.split) : apply_split(d.tracks, read_split_manifest(manifest));
  const int tau = static_cast<int>(config.model.tau), rho = static_cast<int>(config.model.rho);
  d.windows.name = name;
  d.windows.train = window_tracks(d.split.train, tau, rho, config.stride);
  d.windows.val = window_tracks(d.split.val, tau, rho, config.stride);
  d.windows.test = window_tracks(d.split.test, tau, rho, config.stride);
  return d;
}

}  // namespace mgnet
