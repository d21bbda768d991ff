#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mgnet/metrics.hpp"
#include "mgnet/training.hpp"

namespace mgnet {

/// Pixel-space windows in, one rho x 4 pixel box sequence per window out.
using Predictor = std::function<std::vector<BoxSequence>(const std::vector<TrajectoryWindow>&)>;

/// Extrapolates the displacement between the last two observed boxes.
BoxSequence constant_velocity(const TrajectoryWindow& window);
/// Per-coordinate least-squares line through the observed boxes, extrapolated.
BoxSequence linear_fit(const TrajectoryWindow& window);

Predictor constant_velocity_predictor();
Predictor linear_predictor();

struct EvalOptions {
  double image_w = 1920.0;
  double image_h = 1080.0;
  double fps = 30.0;
  int samples = 0;  // 0: prior mean; n > 0: average metrics over n prior samples
  std::uint64_t seed = 0;
};

/// Normalizes, predicts with the prior mean (or a prior sample drawn with
/// `seed`), and maps back to pixels. The model is held by reference.
template <typename Scalar>
Predictor model_predictor(MgNet<Scalar>& model, const EvalOptions& options, ForwardMode mode = ForwardMode::prior_mean,
                          std::uint64_t seed = 0);

MetricReport evaluate(const Predictor& predictor, const std::vector<TrajectoryWindow>& windows, double fps = 30.0);

/// Loads the checkpoint in its stored precision and evaluates it.
MetricReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::vector<TrajectoryWindow>& windows,
                                 const EvalOptions& options = {});

/// Predictions from a checkpoint, in pixels, for export or plotting.
std::vector<BoxSequence> predict_checkpoint(const std::filesystem::path& checkpoint,
                                            const std::vector<TrajectoryWindow>& windows,
                                            const EvalOptions& options = {});

struct ExperimentRow {
  std::string dataset;
  std::string variant;
  Index k = 0;
  MetricReport report;
  std::vector<std::uint64_t> seeds;
  std::vector<std::filesystem::path> checkpoints;
};

struct ExperimentTable {
  std::vector<ExperimentRow> rows;
};

/// Pixel-space windows per split.
struct ExperimentData {
  std::string name = "synthetic";
  std::vector<TrajectoryWindow> train, val, test;
};

struct ExperimentOptions {
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = "runs";
  bool double_precision = false;
  std::function<void(const std::string&)> log;
};

/// Trains one model per seed (init and data order seeded alike), keeps each
/// best checkpoint under out_dir/<tag>/seed_<s>/, and averages test metrics.
ExperimentRow train_and_evaluate(const ExperimentData& data, const ModelConfig& model, const std::string& variant,
                                 const std::string& tag, const ExperimentOptions& options);

ExperimentRow baseline_row(const ExperimentData& data, const std::string& variant, const Predictor& predictor,
                           double fps = 30.0);

/// BL, +AT, +ES, +AT+ES with shared seeds.
ExperimentTable run_ablation(const ExperimentData& data, const ExperimentOptions& options);

/// One full-model row per k; every k is validated before any training.
ExperimentTable run_exploration(const ExperimentData& data, const std::vector<Index>& k_list,
                                const ExperimentOptions& options);

/// Columns: dataset, variant, k, mse_0.5, mse_1.0, mse_1.5, c_mse, cf_mse, seeds.
std::string results_csv(const ExperimentTable& table);
void write_results_csv(const std::filesystem::path& path, const ExperimentTable& table);

/// One line per window and step: {video_id, track_id, t, horizon_step, cx, cy, w, h}.
void write_predictions_jsonl(const std::filesystem::path& path, const std::vector<TrajectoryWindow>& windows,
                             const std::vector<BoxSequence>& predictions);

struct PredictionRecord {
  std::string video_id;
  std::string track_id;
  int t = 0;
  BoxSequence boxes;
};

std::vector<PredictionRecord> read_predictions_jsonl(const std::filesystem::path& path);

}  // namespace mgnet
