#include "mgnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mgnet {

namespace {

constexpr char kMagic[8] = {'M', 'G', 'N', 'E', 'T', 'C', 'K', 'P'};

template <typename Scalar>
constexpr const char* dtype_name() {
  return sizeof(Scalar) == 4 ? "float32" : "float64";
}

json config_to_json(const ModelConfig& c) {
  return json{{"tau", c.tau},
              {"rho", c.rho},
              {"k", c.k},
              {"attention", c.attention},
              {"evaluator", c.evaluator},
              {"hidden_dim", c.hidden_dim},
              {"latent_dim", c.latent_dim},
              {"box_embed_dim", c.box_embed_dim},
              {"batch_norm", c.batch_norm},
              {"auxiliary_coarse_loss", c.auxiliary_coarse_loss},
              {"attention_config",
               {{"embed_dim", c.attention_config.embed_dim},
                {"num_heads", c.attention_config.num_heads},
                {"num_layers", c.attention_config.num_layers},
                {"ff_multiplier", c.attention_config.ff_multiplier},
                {"output_dim", c.attention_config.output_dim},
                {"positional", c.attention_config.positional}}}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.tau = j.at("tau");
  c.rho = j.at("rho");
  c.k = j.at("k");
  c.attention = j.at("attention");
  c.evaluator = j.at("evaluator");
  c.hidden_dim = j.at("hidden_dim");
  c.latent_dim = j.at("latent_dim");
  c.box_embed_dim = j.at("box_embed_dim");
  c.batch_norm = j.at("batch_norm");
  c.auxiliary_coarse_loss = j.at("auxiliary_coarse_loss");
  const json& a = j.at("attention_config");
  c.attention_config.embed_dim = a.at("embed_dim");
  c.attention_config.num_heads = a.at("num_heads");
  c.attention_config.num_layers = a.at("num_layers");
  c.attention_config.ff_multiplier = a.at("ff_multiplier");
  c.attention_config.output_dim = a.at("output_dim");
  c.attention_config.positional = a.at("positional");
  return c;
}

struct RawCheckpoint {
  json meta;
  std::vector<char> payload;
};

RawCheckpoint read_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t meta_size = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&meta_size), sizeof meta_size);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error(path.string() + ": not a checkpoint file");
  if (version != kCheckpointVersion)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  std::string text(meta_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(meta_size));
  if (!in) throw std::runtime_error(path.string() + ": truncated metadata");
  RawCheckpoint raw;
  try {
    raw.meta = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": corrupt metadata: " + e.what());
  }
  raw.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return raw;
}

CheckpointInfo info_from_meta(const json& meta) {
  CheckpointInfo info;
  info.version = meta.at("version");
  info.model = config_from_json(meta.at("config"));
  info.epoch = meta.at("epoch");
  info.val_loss = meta.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                : meta.at("val_loss").get<double>();
  info.rng_state = meta.at("rng_state");
  info.dtype = meta.at("dtype");
  return info;
}

template <typename From, typename Scalar>
void copy_array(const char* src, Matrix<Scalar>& dst) {
  for (Index i = 0; i < dst.size(); ++i) {
    From v;
    std::memcpy(&v, src + i * static_cast<Index>(sizeof(From)), sizeof(From));
    dst.data()[i] = static_cast<Scalar>(v);
  }
}

}  // namespace

std::string model_config_json(const ModelConfig& config) { return config_to_json(config).dump(2); }

ModelConfig model_config_from_json(const std::string& text) { return config_from_json(json::parse(text)); }

template <typename Scalar>
void save_checkpoint(const fs::path& path, MgNet<Scalar>& model, CheckpointInfo info) {
  info.dtype = dtype_name<Scalar>();
  auto refs = model.state();
  json tensors = json::array();
  std::vector<std::pair<std::string, const Matrix<Scalar>*>> arrays;
  for (auto* p : refs.params) arrays.emplace_back(p->name, &p->value);
  for (auto& [name, m] : refs.buffers) arrays.emplace_back(name, m);
  std::uint64_t offset = 0;
  for (const auto& [name, m] : arrays) {
    tensors.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m->size()) * sizeof(Scalar);
  }
  json meta{{"version", info.version},
            {"config", config_to_json(info.model)},
            {"epoch", info.epoch},
            {"val_loss", std::isfinite(info.val_loss) ? json(info.val_loss) : json(nullptr)},
            {"rng_state", info.rng_state},
            {"dtype", info.dtype},
            {"tensors", tensors}};
  const std::string text = meta.dump();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    const std::uint32_t version = info.version;
    const std::uint64_t meta_size = text.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&meta_size), sizeof meta_size);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : arrays)
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(Scalar)));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const fs::path& path) { return info_from_meta(read_raw(path).meta); }

template <typename Scalar>
MgNet<Scalar> load_checkpoint(const fs::path& path, CheckpointInfo* info) {
  const RawCheckpoint raw = read_raw(path);
  CheckpointInfo meta_info = info_from_meta(raw.meta);
  const bool is_double = meta_info.dtype == "float64";
  if (!is_double && meta_info.dtype != "float32")
    throw std::runtime_error(path.string() + ": unknown dtype " + meta_info.dtype);
  const std::size_t width = is_double ? 8 : 4;

  MgNet<Scalar> model(meta_info.model, 0);
  auto refs = model.state();
  std::map<std::string, Matrix<Scalar>*> targets;
  for (auto* p : refs.params) targets[p->name] = &p->value;
  for (auto& [name, m] : refs.buffers) targets[name] = m;

  std::size_t loaded = 0;
  for (const auto& t : raw.meta.at("tensors")) {
    const std::string name = t.at("name");
    auto it = targets.find(name);
    if (it == targets.end()) throw std::runtime_error(path.string() + ": unexpected tensor " + name);
    Matrix<Scalar>& dst = *it->second;
    if (dst.rows() != t.at("rows").get<Index>() || dst.cols() != t.at("cols").get<Index>())
      throw std::runtime_error(path.string() + ": shape mismatch for " + name);
    const std::uint64_t offset = t.at("offset");
    if (offset + static_cast<std::uint64_t>(dst.size()) * width > raw.payload.size())
      throw std::runtime_error(path.string() + ": truncated tensor data for " + name);
    if (is_double)
      copy_array<double>(raw.payload.data() + offset, dst);
    else
      copy_array<float>(raw.payload.data() + offset, dst);
    ++loaded;
  }
  if (loaded != targets.size()) throw std::runtime_error(path.string() + ": checkpoint is missing tensors");
  if (info) *info = meta_info;
  return model;
}

template void save_checkpoint(const fs::path&, MgNet<float>&, CheckpointInfo);
template void save_checkpoint(const fs::path&, MgNet<double>&, CheckpointInfo);
template MgNet<float> load_checkpoint(const fs::path&, CheckpointInfo*);
template MgNet<double> load_checkpoint(const fs::path&, CheckpointInfo*);

}  // namespace mgnet
