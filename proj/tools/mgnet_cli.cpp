// mgnet: ingest, synth, train, eval, ablate, explore, plot.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mgnet/config.hpp"
#include "mgnet/plot.hpp"

namespace fs = std::filesystem;
using namespace mgnet;

namespace {

// Flags shared by commands that read a dataset and build models. Only flags
// given on the command line override the config file.
struct CommonFlags {
  std::string config_file;
  std::string data;
  std::string format;
  std::string out;
  std::string seeds;
  std::string precision;
  int epochs = 0;
  int batch_size = 0;
  double lr = 0.0;
  int goals = 0;
  int tau = 0;
  int rho = 0;
  int hidden = 0;
  bool no_attention = false;
  bool no_evaluator = false;
  double image_w = 0.0;
  double image_h = 0.0;
  int split_seed = -1;
  int samples = -1;
  CLI::App* app = nullptr;

  void attach(CLI::App* sub, bool model_flags) {
    app = sub;
    sub->add_option("--config", config_file, "TOML-style run config; command-line flags take precedence");
    sub->add_option("--data", data, "dataset file or directory (default: $MGNET_DATA_DIR)");
    sub->add_option("--format", format, "jaad-xml | pie | jsonl");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--split-seed", split_seed, "seed of the video-level split");
    sub->add_option("--image-w", image_w, "image width in pixels");
    sub->add_option("--image-h", image_h, "image height in pixels");
    sub->add_option("--samples", samples, "0: prior mean; n: average over n prior samples");
    if (!model_flags) return;
    sub->add_option("--seeds,--seed", seeds, "comma-separated seeds; results average over them");
    sub->add_option("--epochs", epochs, "training epochs");
    sub->add_option("--batch-size", batch_size, "mini-batch size");
    sub->add_option("--lr", lr, "initial learning rate");
    sub->add_option("--goals", goals, "stage goal count k (must divide rho)");
    sub->add_option("--tau", tau, "observed steps");
    sub->add_option("--rho", rho, "predicted steps");
    sub->add_option("--hidden", hidden, "recurrent hidden width");
    sub->add_flag("--no-attention", no_attention, "drop the attention branch");
    sub->add_flag("--no-evaluator", no_evaluator, "use a single long-term goal");
    sub->add_option("--precision", precision, "float32 | float64");
  }

  bool given(const std::string& name) const { return app->count(name) > 0; }

  RunConfig resolve(const std::string& default_out) const {
    RunConfig cfg;
    cfg.out_dir = default_out;
    if (const char* env = std::getenv("MGNET_DATA_DIR")) cfg.data_path = env;
    if (!config_file.empty()) cfg = load_run_config(config_file);
    KeyValues kv;
    auto set = [&](const char* flag, const char* key, const std::string& value) {
      if (given(flag)) kv[key] = value;
    };
    set("--data", "data.path", data);
    set("--format", "data.format", format);
    set("--out", "run.out_dir", out);
    set("--split-seed", "data.split_seed", std::to_string(split_seed));
    set("--image-w", "data.image_w", std::to_string(image_w));
    set("--image-h", "data.image_h", std::to_string(image_h));
    set("--samples", "run.samples", std::to_string(samples));
    if (app->get_option_no_throw("--epochs")) {
      set("--seeds", "run.seeds", seeds);
      set("--epochs", "train.epochs", std::to_string(epochs));
      set("--batch-size", "train.batch_size", std::to_string(batch_size));
      set("--lr", "train.lr", std::to_string(lr));
      set("--goals", "model.k", std::to_string(goals));
      set("--tau", "model.tau", std::to_string(tau));
      set("--rho", "model.rho", std::to_string(rho));
      set("--hidden", "model.hidden_dim", std::to_string(hidden));
      set("--precision", "train.precision", precision);
      if (no_attention) kv["model.attention"] = "false";
      if (no_evaluator) kv["model.evaluator"] = "false";
    }
    apply_key_values(cfg, kv);
    cfg.validate();
    return cfg;
  }
};

void log_line(const std::string& s) { std::cerr << s << '\n'; }

std::string summary(const MetricReport& r) {
  std::ostringstream os;
  for (const auto& [s, v] : r.mse_by_horizon) os << "mse@" << s << "s=" << v << ' ';
  os << "c_mse=" << r.c_mse << " cf_mse=" << r.cf_mse << " n=" << r.sample_count;
  return os.str();
}

ExperimentOptions experiment_options(const RunConfig& cfg) {
  ExperimentOptions o;
  o.model = cfg.model;
  o.train = cfg.train;
  o.eval.image_w = cfg.image_w;
  o.eval.image_h = cfg.image_h;
  o.eval.fps = cfg.fps;
  o.eval.samples = cfg.samples;
  o.seeds = cfg.seeds;
  o.out_dir = cfg.out_dir;
  o.double_precision = cfg.precision == "float64";
  o.log = log_line;
  return o;
}

std::vector<TrajectoryWindow> normalize_all(const std::vector<TrajectoryWindow>& w, const RunConfig& cfg) {
  std::vector<TrajectoryWindow> out;
  for (const auto& x : w) out.push_back(normalize_window(x, cfg.image_w, cfg.image_h));
  return out;
}

std::string dataset_name(const RunConfig& cfg) {
  fs::path p = cfg.data_path;
  if (p.filename() == "tracks.jsonl") p = p.parent_path();
  const std::string n = p.filename().string();
  return n.empty() ? "dataset" : n;
}

template <typename Scalar>
void train_model(const RunConfig& cfg) {
  const PreparedData data = prepare_data(cfg, dataset_name(cfg));
  write_run_config(cfg.out_dir, cfg);
  log_line("windows: train " + std::to_string(data.windows.train.size()) + ", val " +
           std::to_string(data.windows.val.size()) + ", test " + std::to_string(data.windows.test.size()));
  MgNet<Scalar> model(cfg.model, cfg.seeds.front());
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seeds.front();
  tc.checkpoint_path = cfg.out_dir / "best.ckpt";
  tc.log_path = cfg.out_dir / "train_log.csv";
  const FitResult r =
      fit(model, normalize_all(data.windows.train, cfg), normalize_all(data.windows.val, cfg), tc, [](const EpochRecord& e) {
        std::ostringstream os;
        os << "epoch " << e.epoch << " lr " << e.lr << " train " << e.train.total << " (pred " << e.train.l_pred
           << ", goals " << e.train.l_goals << ", kld " << e.train.kld << ") val " << e.val_total;
        log_line(os.str());
      });
  std::cout << "best epoch " << r.best_epoch << ", val_total " << r.best_val << ", checkpoint "
            << tc.checkpoint_path.string() << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"MGNet pedestrian bounding-box trajectory prediction"};
  app.require_subcommand(1);
  app.footer("Precedence: command-line flags > --config file > defaults. MGNET_DATA_DIR sets the default --data.");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "convert JAAD/PIE annotations to canonical JSONL with a split manifest");
  std::string ingest_input;
  CommonFlags ingest_flags;
  ingest_flags.attach(ingest, false);
  ingest->add_option("--input", ingest_input, "annotation file or directory")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic track corpus");
  SyntheticConfig sc;
  std::string motion = "constant-velocity", synth_out = "data/synthetic";
  int split_seed = 0;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--n-tracks", sc.n_tracks, "number of tracks");
  synth->add_option("--length", sc.length, "frames per track");
  synth->add_option("--motion", motion, "constant-velocity | turn | stop-go");
  synth->add_option("--noise", sc.noise_sigma, "Gaussian noise sigma in pixels");
  synth->add_option("--seed", sc.seed, "generator seed");
  synth->add_option("--turn-angle", sc.turn_angle_deg, "heading change of turn tracks in degrees");
  synth->add_option("--split-seed", split_seed, "seed of the video-level split");

  CommonFlags train_flags, eval_flags, ablate_flags, explore_flags;
  auto* train = app.add_subcommand("train", "train one model and keep the best checkpoint");
  train_flags.attach(train, true);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and the linear and constant-velocity baselines");
  std::string checkpoint, split_name = "test";
  eval_flags.attach(eval, false);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--split", split_name, "train | val | test");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate BL, +AT, +ES and +AT+ES");
  ablate_flags.attach(ablate, true);

  auto* explore = app.add_subcommand("explore", "train and evaluate the full model for each stage count k");
  std::string k_list = "1,3,9,15,45";
  explore_flags.attach(explore, true);
  explore->add_option("--k-list,--goal-list", k_list, "comma-separated stage counts");

  auto* plot = app.add_subcommand("plot", "draw predictions against ground truth as PNG files");
  CommonFlags plot_flags;
  std::string predictions;
  std::size_t limit = 20;
  plot_flags.attach(plot, false);
  plot->add_option("--predictions", predictions, "predictions JSONL written by eval")->required();
  plot->add_option("--limit", limit, "maximum number of images");
  plot->add_option("--split", split_name, "split the predictions were made on");
  plot->add_option("--rho", plot_flags.rho, "predicted steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*ingest) {
    RunConfig cfg = ingest_flags.resolve("data/ingested");
    if (!ingest_flags.given("--format")) cfg.format = TrackFormat::jaad_xml;
    const auto tracks = load_tracks(ingest_input, cfg.format);
    cfg.data_path = cfg.out_dir;
    const TrackFormat source_format = cfg.format;
    cfg.format = TrackFormat::jsonl;
    write_tracks_jsonl(cfg.out_dir / "tracks.jsonl", tracks);
    try {
      write_split_manifest(cfg.out_dir / "split.json", split_videos(tracks, cfg.split));
    } catch (const std::invalid_argument& e) {
      log_line(std::string("no split manifest written: ") + e.what());
    }
    write_run_config(cfg.out_dir, cfg);
    std::size_t records = 0;
    for (const auto& t : tracks) records += t.size();
    std::cout << "ingested " << tracks.size() << " tracks (" << records << " boxes) from " << to_string(source_format)
              << " into " << (cfg.out_dir / "tracks.jsonl").string() << '\n';
  } else if (*synth) {
    sc.motion = parse_motion(motion);
    const auto tracks = generate_synthetic(sc);
    RunConfig cfg;
    cfg.split.seed = static_cast<std::uint64_t>(split_seed);
    cfg.out_dir = synth_out;
    cfg.data_path = synth_out;
    write_tracks_jsonl(cfg.out_dir / "tracks.jsonl", tracks);
    write_split_manifest(cfg.out_dir / "split.json", split_videos(tracks, cfg.split));
    write_run_config(cfg.out_dir, cfg);
    std::cout << "wrote " << tracks.size() << " " << to_string(sc.motion) << " tracks to "
              << (cfg.out_dir / "tracks.jsonl").string() << '\n';
  } else if (*train) {
    const RunConfig cfg = train_flags.resolve("runs/train");
    if (cfg.precision == "float64")
      train_model<double>(cfg);
    else
      train_model<float>(cfg);
  } else if (*eval) {
    RunConfig cfg = eval_flags.resolve("runs/eval");
    const CheckpointInfo info = read_checkpoint_info(checkpoint);
    cfg.model = info.model;
    const PreparedData data = prepare_data(cfg, dataset_name(cfg));
    const std::vector<TrajectoryWindow>* windows = split_name == "train" ? &data.windows.train
                                                   : split_name == "val" ? &data.windows.val
                                                   : split_name == "test"
                                                       ? &data.windows.test
                                                       : throw std::invalid_argument("unknown split " + split_name);
    if (windows->empty()) throw std::runtime_error("split '" + split_name + "' has no windows");
    write_run_config(cfg.out_dir, cfg);
    EvalOptions eo;
    eo.image_w = cfg.image_w;
    eo.image_h = cfg.image_h;
    eo.fps = cfg.fps;
    eo.samples = cfg.samples;
    ExperimentData split_data;
    split_data.name = data.windows.name;
    split_data.test = *windows;
    ExperimentTable table;
    ExperimentRow model_row;
    model_row.dataset = split_data.name;
    model_row.variant = info.model.variant_name();
    model_row.k = info.model.goal_count();
    model_row.report = evaluate_checkpoint(checkpoint, *windows, eo);
    model_row.checkpoints = {checkpoint};
    table.rows.push_back(model_row);
    table.rows.push_back(baseline_row(split_data, "Linear", linear_predictor(), cfg.fps));
    table.rows.push_back(baseline_row(split_data, "CV", constant_velocity_predictor(), cfg.fps));
    write_results_csv(cfg.out_dir / "results.csv", table);
    write_predictions_jsonl(cfg.out_dir / "predictions.jsonl", *windows, predict_checkpoint(checkpoint, *windows, eo));
    for (const auto& r : table.rows) std::cout << r.variant << ": " << summary(r.report) << '\n';
    std::cout << "results: " << (cfg.out_dir / "results.csv").string() << '\n';
  } else if (*ablate) {
    const RunConfig cfg = ablate_flags.resolve("runs/ablation");
    const PreparedData data = prepare_data(cfg, dataset_name(cfg));
    write_run_config(cfg.out_dir, cfg);
    const ExperimentTable table = run_ablation(data.windows, experiment_options(cfg));
    write_results_csv(cfg.out_dir / "ablation.csv", table);
    std::cout << results_csv(table);
  } else if (*explore) {
    const RunConfig cfg = explore_flags.resolve("runs/exploration");
    const auto ks = parse_index_list(k_list);
    for (Index k : ks) validate_stage_count(cfg.model.rho, k);
    const PreparedData data = prepare_data(cfg, dataset_name(cfg));
    write_run_config(cfg.out_dir, cfg);
    const ExperimentTable table = run_exploration(data.windows, ks, experiment_options(cfg));
    write_results_csv(cfg.out_dir / "exploration.csv", table);
    std::cout << results_csv(table);
  } else if (*plot) {
    RunConfig cfg = plot_flags.resolve("runs/plots");
    const auto records = read_predictions_jsonl(predictions);
    if (!records.empty()) cfg.model.rho = records.front().boxes.rows();
    if (plot_flags.given("--rho")) cfg.model.rho = plot_flags.rho;
    cfg.model.k = 1;
    const PreparedData data = prepare_data(cfg, dataset_name(cfg));
    std::vector<TrajectoryWindow> all = data.windows.train;
    all.insert(all.end(), data.windows.val.begin(), data.windows.val.end());
    all.insert(all.end(), data.windows.test.begin(), data.windows.test.end());
    auto plots = match_predictions(all, records);
    if (plots.size() > limit) plots.resize(limit);
    write_run_config(cfg.out_dir, cfg);
    const auto paths = plot_trajectories(plots, cfg.out_dir, cfg.fps);
    std::cout << "wrote " << paths.size() << " plots to " << cfg.out_dir.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "mgnet: error: " << msg << '\n';
    return 1;
  }
}
