#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mgnet/config.hpp"

using namespace mgnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mgnet_config_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Outcome {
  int code;
  std::string out, err;
};

// Runs the CLI with stdout and stderr captured to files.
Outcome cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + MGNET_CLI + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return {code, slurp(out), slurp(err)};
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("sections, comments and quoted values") {
  const KeyValues kv = parse_key_values(
      "# run\n"
      "[data]\n"
      "path = \"data/a b\"  # trailing\n"
      "stride=2\n"
      "\n"
      "[ model ]\n"
      "k = 9\n");
  CHECK(kv.at("data.path") == "data/a b");
  CHECK(kv.at("data.stride") == "2");
  CHECK(kv.at("model.k") == "9");
  CHECK(kv.size() == 3);
}

TEST_CASE("malformed lines name the source and line") {
  try {
    parse_key_values("[data]\nnot a pair\n", "cfg.toml");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("cfg.toml:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_key_values("[data\n"), ParseError);
  CHECK_THROWS_AS(parse_key_values("= 3\n"), ParseError);
}

TEST_CASE("values apply on top of defaults and unknown keys are rejected") {
  RunConfig cfg;
  apply_key_values(cfg, {{"model.k", "15"}, {"model.attention", "false"}, {"train.lr", "0.002"}, {"run.seeds", "1,2,3"}});
  CHECK(cfg.model.k == 15);
  CHECK(!cfg.model.attention);
  CHECK(cfg.train.lr == doctest::Approx(0.002));
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(cfg.model.rho == 45);
  CHECK_THROWS_AS(apply_key_values(cfg, {{"model.kk", "3"}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_key_values(cfg, {{"model.k", "three"}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_key_values(cfg, {{"model.attention", "yes please"}}), std::invalid_argument);
}

TEST_CASE("serialized config loads back to the same values") {
  RunConfig cfg;
  cfg.data_path = "some/data";
  cfg.format = TrackFormat::pie;
  cfg.model.k = 9;
  cfg.model.evaluator = true;
  cfg.model.attention = false;
  cfg.train.lr = 0.0005;
  cfg.train.epochs = 7;
  cfg.precision = "float64";
  cfg.seeds = {4, 5};
  cfg.samples = 3;
  const fs::path dir = scratch("roundtrip");
  write_run_config(dir, cfg);
  const RunConfig back = load_run_config(dir / "run_config.toml");
  CHECK(back.data_path == cfg.data_path);
  CHECK(back.format == cfg.format);
  CHECK(back.model.k == 9);
  CHECK(!back.model.attention);
  CHECK(back.train.lr == cfg.train.lr);
  CHECK(back.train.epochs == 7);
  CHECK(back.precision == "float64");
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.samples == 3);
  CHECK(to_toml(back) == to_toml(cfg));
}

TEST_CASE("index lists") {
  CHECK(parse_index_list("1,3,9,15,45") == std::vector<Index>{1, 3, 9, 15, 45});
  CHECK(parse_index_list(" 2 , 4 ") == std::vector<Index>{2, 4});
  CHECK_THROWS_AS(parse_index_list(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_index_list("1,x"), std::invalid_argument);
}

TEST_CASE("validation rejects inconsistent settings") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.model.k = 7;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = RunConfig{};
  cfg.precision = "float16";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = RunConfig{};
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = RunConfig{};
  cfg.stride = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("command-line errors exit nonzero with one line") {
  const fs::path dir = scratch("errors");
  const Outcome missing = cli("train --data \"" + (dir / "nowhere").string() + "\" --out \"" + (dir / "run").string() + "\"", dir);
  CHECK(missing.code == 1);
  CHECK(count_lines(missing.err) == 1);
  CHECK(missing.err.rfind("mgnet: error:", 0) == 0);

  const fs::path empty = dir / "empty";
  fs::create_directories(empty);
  const Outcome none = cli("ingest --input \"" + empty.string() + "\" --out \"" + (dir / "ing").string() + "\"", dir);
  CHECK(none.code == 1);
  CHECK(count_lines(none.err) == 1);

  const Outcome bad_k = cli("explore --data \"" + dir.string() + "\" --rho 6 --k-list 1,4", dir);
  CHECK(bad_k.code == 1);
  CHECK(count_lines(bad_k.err) == 1);
}

TEST_CASE("synthetic corpus generation is reproducible") {
  const fs::path dir = scratch("synth");
  const std::string args = " --n-tracks 12 --length 40 --motion turn --noise 1 --seed 3";
  REQUIRE(cli("synth --out \"" + (dir / "a").string() + "\"" + args, dir).code == 0);
  REQUIRE(cli("synth --out \"" + (dir / "b").string() + "\"" + args, dir).code == 0);
  CHECK(slurp(dir / "a" / "tracks.jsonl") == slurp(dir / "b" / "tracks.jsonl"));
  CHECK(slurp(dir / "a" / "split.json") == slurp(dir / "b" / "split.json"));
  CHECK(fs::exists(dir / "a" / "run_config.toml"));
  REQUIRE(cli("synth --out \"" + (dir / "c").string() + "\" --n-tracks 12 --length 40 --motion turn --noise 1 --seed 4", dir).code == 0);
  CHECK(slurp(dir / "a" / "tracks.jsonl") != slurp(dir / "c" / "tracks.jsonl"));
}

TEST_CASE("ingest converts annotations and is idempotent") {
  const fs::path dir = scratch("ingest");
  const std::string input = std::string(MGNET_TEST_DATA) + "/jaad";
  const Outcome first = cli("ingest --input \"" + input + "\" --out \"" + (dir / "a").string() + "\"", dir);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("2 tracks (5 boxes)") != std::string::npos);
  REQUIRE(cli("ingest --input \"" + input + "\" --out \"" + (dir / "b").string() + "\"", dir).code == 0);
  CHECK(slurp(dir / "a" / "tracks.jsonl") == slurp(dir / "b" / "tracks.jsonl"));
  // A single video cannot fill three splits.
  CHECK(!fs::exists(dir / "a" / "split.json"));
  CHECK(first.err.find("no split manifest") != std::string::npos);
  const RunConfig cfg = load_run_config(dir / "a" / "run_config.toml");
  CHECK(cfg.format == TrackFormat::jsonl);
}

TEST_CASE("train then eval on a tiny corpus writes configs and finite metrics") {
  const fs::path dir = scratch("pipeline");
  const fs::path data = dir / "data", run = dir / "run", ev = dir / "eval";
  REQUIRE(cli("synth --out \"" + data.string() + "\" --n-tracks 20 --length 30 --seed 1", dir).code == 0);

  const fs::path cfg_file = dir / "small.toml";
  std::ofstream(cfg_file) << "[model]\nhidden_dim = 8\nlatent_dim = 2\nbox_embed_dim = 4\nembed_dim = 8\n"
                             "num_heads = 2\nattention_dim = 8\n[train]\nepochs = 5\n";
  const std::string common = " --data \"" + data.string() + "\" --config \"" + cfg_file.string() + "\"";
  const Outcome t = cli("train" + common + " --out \"" + run.string() + "\" --tau 5 --rho 6 --goals 3 --epochs 1", dir);
  INFO(t.err);
  REQUIRE(t.code == 0);
  REQUIRE(fs::exists(run / "best.ckpt"));
  CHECK(fs::exists(run / "train_log.csv"));

  // Flags beat the config file.
  const RunConfig written = load_run_config(run / "run_config.toml");
  CHECK(written.train.epochs == 1);
  CHECK(written.model.hidden_dim == 8);
  CHECK(written.model.k == 3);

  const Outcome e = cli("eval --data \"" + data.string() + "\" --checkpoint \"" + (run / "best.ckpt").string() +
                            "\" --out \"" + ev.string() + "\"",
                        dir);
  INFO(e.err);
  REQUIRE(e.code == 0);
  CHECK(fs::exists(ev / "run_config.toml"));
  CHECK(fs::exists(ev / "predictions.jsonl"));
  std::ifstream csv(ev / "results.csv");
  std::string header, line;
  std::getline(csv, header);
  CHECK(header == "dataset,variant,k,mse_0.5,mse_1.0,mse_1.5,c_mse,cf_mse,seeds");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(line.find("nan") == std::string::npos);
    CHECK(line.find("inf") == std::string::npos);
  }
  CHECK(rows == 3);
}
