#include "mgnet/evaluation.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mgnet {

BoxSequence constant_velocity(const TrajectoryWindow& window) {
  const Index tau = window.tau(), rho = window.rho();
  const Eigen::RowVector4d last = window.observed.row(tau - 1);
  const Eigen::RowVector4d v =
      tau >= 2 ? Eigen::RowVector4d(last - window.observed.row(tau - 2)) : Eigen::RowVector4d::Zero();
  BoxSequence out(rho, 4);
  for (Index s = 0; s < rho; ++s) out.row(s) = last + static_cast<double>(s + 1) * v;
  return out;
}

BoxSequence linear_fit(const TrajectoryWindow& window) {
  const Index tau = window.tau(), rho = window.rho();
  if (tau < 2) return constant_velocity(window);
  Eigen::MatrixXd design(tau, 2);
  design.col(0).setOnes();
  design.col(1) = Eigen::VectorXd::LinSpaced(tau, 0.0, static_cast<double>(tau - 1));
  const Eigen::MatrixXd coef = design.colPivHouseholderQr().solve(Eigen::MatrixXd(window.observed));
  BoxSequence out(rho, 4);
  for (Index s = 0; s < rho; ++s) out.row(s) = coef.row(0) + static_cast<double>(tau - 1 + s + 1) * coef.row(1);
  return out;
}

namespace {

Predictor per_window(BoxSequence (*f)(const TrajectoryWindow&)) {
  return [f](const std::vector<TrajectoryWindow>& windows) {
    std::vector<BoxSequence> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(f(w));
    return out;
  };
}

std::vector<TrajectoryWindow> normalize_all(const std::vector<TrajectoryWindow>& windows, double image_w,
                                            double image_h) {
  std::vector<TrajectoryWindow> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(normalize_window(w, image_w, image_h));
  return out;
}

std::vector<BoxSequence> truths(const std::vector<TrajectoryWindow>& windows) {
  std::vector<BoxSequence> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    if (w.normalized) throw std::invalid_argument("evaluate: windows must be in pixel space");
    out.push_back(w.future);
  }
  return out;
}

template <typename Scalar>
MetricReport evaluate_model(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& windows,
                            const EvalOptions& options) {
  if (options.samples <= 0) return evaluate(model_predictor(model, options), windows, options.fps);
  std::vector<MetricReport> reports;
  for (int i = 0; i < options.samples; ++i)
    reports.push_back(evaluate(
        model_predictor(model, options, ForwardMode::prior_sample, options.seed + static_cast<std::uint64_t>(i)),
        windows, options.fps));
  return average_reports(reports);
}

template <typename Scalar>
std::vector<BoxSequence> predict_model(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& windows,
                                       const EvalOptions& options) {
  const ForwardMode mode = options.samples > 0 ? ForwardMode::prior_sample : ForwardMode::prior_mean;
  return model_predictor(model, options, mode, options.seed)(windows);
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += c;
    else if (c == '+' && !out.empty())
      out += '_';
  }
  return out.empty() ? "BL" : out;
}

template <typename Scalar>
ExperimentRow train_rows(const ExperimentData& data, const ModelConfig& model_config, const std::string& variant,
                         const std::string& tag, const ExperimentOptions& options) {
  const auto train = normalize_all(data.train, options.eval.image_w, options.eval.image_h);
  const auto val = normalize_all(data.val, options.eval.image_w, options.eval.image_h);
  ExperimentRow row;
  row.dataset = data.name;
  row.variant = variant;
  row.k = model_config.goal_count();
  row.seeds = options.seeds;
  std::vector<MetricReport> reports;
  for (std::uint64_t seed : options.seeds) {
    MgNet<Scalar> model(model_config, seed);
    TrainConfig tc = options.train;
    tc.seed = seed;
    const fs::path dir = options.out_dir / tag / ("seed_" + std::to_string(seed));
    tc.checkpoint_path = dir / "best.ckpt";
    tc.log_path = dir / "train_log.csv";
    if (options.log) options.log(tag + " seed " + std::to_string(seed) + ": training");
    const FitResult fit_result = fit(model, train, val, tc, [&](const EpochRecord& r) {
      if (!options.log) return;
      std::ostringstream os;
      os << tag << " seed " << seed << " epoch " << r.epoch << " train " << r.train.total << " val " << r.val_total;
      options.log(os.str());
    });
    (void)fit_result;
    row.checkpoints.push_back(tc.checkpoint_path);
    reports.push_back(evaluate_model(model, data.test, options.eval));
  }
  row.report = average_reports(reports);
  return row;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

Predictor constant_velocity_predictor() { return per_window(&constant_velocity); }
Predictor linear_predictor() { return per_window(&linear_fit); }

template <typename Scalar>
Predictor model_predictor(MgNet<Scalar>& model, const EvalOptions& options, ForwardMode mode, std::uint64_t seed) {
  return [&model, options, mode, seed](const std::vector<TrajectoryWindow>& windows) {
    const auto normalized = normalize_all(windows, options.image_w, options.image_h);
    auto pred = predict_normalized(model, normalized, mode, seed);
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = normalized[i].transform.denormalize(pred[i]);
    return pred;
  };
}

MetricReport evaluate(const Predictor& predictor, const std::vector<TrajectoryWindow>& windows, double fps) {
  if (windows.empty()) throw std::invalid_argument("evaluate: no windows to evaluate");
  const auto truth = truths(windows);
  return compute_report(predictor(windows), truth, fps);
}

MetricReport evaluate_checkpoint(const fs::path& checkpoint, const std::vector<TrajectoryWindow>& windows,
                                 const EvalOptions& options) {
  if (read_checkpoint_info(checkpoint).dtype == "float64") {
    auto model = load_checkpoint<double>(checkpoint);
    return evaluate_model(model, windows, options);
  }
  auto model = load_checkpoint<float>(checkpoint);
  return evaluate_model(model, windows, options);
}

std::vector<BoxSequence> predict_checkpoint(const fs::path& checkpoint, const std::vector<TrajectoryWindow>& windows,
                                            const EvalOptions& options) {
  if (read_checkpoint_info(checkpoint).dtype == "float64") {
    auto model = load_checkpoint<double>(checkpoint);
    return predict_model(model, windows, options);
  }
  auto model = load_checkpoint<float>(checkpoint);
  return predict_model(model, windows, options);
}

ExperimentRow train_and_evaluate(const ExperimentData& data, const ModelConfig& model, const std::string& variant,
                                 const std::string& tag, const ExperimentOptions& options) {
  model.validate();
  if (options.seeds.empty()) throw std::invalid_argument("experiment: at least one seed is required");
  if (data.train.empty() || data.val.empty() || data.test.empty())
    throw std::invalid_argument("experiment: train, val and test splits must all have windows");
  return options.double_precision ? train_rows<double>(data, model, variant, tag, options)
                                  : train_rows<float>(data, model, variant, tag, options);
}

ExperimentRow baseline_row(const ExperimentData& data, const std::string& variant, const Predictor& predictor,
                           double fps) {
  ExperimentRow row;
  row.dataset = data.name;
  row.variant = variant;
  row.k = 0;
  row.report = evaluate(predictor, data.test, fps);
  return row;
}

ExperimentTable run_ablation(const ExperimentData& data, const ExperimentOptions& options) {
  ExperimentTable table;
  for (auto [at, es] : {std::pair{false, false}, std::pair{true, false}, std::pair{false, true}, std::pair{true, true}}) {
    ModelConfig m = options.model;
    m.attention = at;
    m.evaluator = es;
    table.rows.push_back(train_and_evaluate(data, m, m.variant_name(), "ablation_" + slug(m.variant_name()), options));
  }
  return table;
}

ExperimentTable run_exploration(const ExperimentData& data, const std::vector<Index>& k_list,
                                const ExperimentOptions& options) {
  if (k_list.empty()) throw std::invalid_argument("exploration: empty k list");
  for (Index k : k_list) validate_stage_count(options.model.rho, k);
  ExperimentTable table;
  for (Index k : k_list) {
    ModelConfig m = options.model;
    m.attention = true;
    m.evaluator = true;
    m.k = k;
    table.rows.push_back(train_and_evaluate(data, m, m.variant_name(), "explore_k" + std::to_string(k), options));
  }
  return table;
}

std::string results_csv(const ExperimentTable& table) {
  std::ostringstream os;
  os << "dataset,variant,k,mse_0.5,mse_1.0,mse_1.5,c_mse,cf_mse,seeds\n";
  for (const auto& r : table.rows) {
    os << r.dataset << ',' << r.variant << ',' << r.k;
    for (double s : {0.5, 1.0, 1.5}) {
      auto it = r.report.mse_by_horizon.find(s);
      os << ',' << (it == r.report.mse_by_horizon.end() ? std::string() : fmt(it->second));
    }
    os << ',' << fmt(r.report.c_mse) << ',' << fmt(r.report.cf_mse) << ',';
    for (std::size_t i = 0; i < r.seeds.size(); ++i) os << (i ? ";" : "") << r.seeds[i];
    os << '\n';
  }
  return os.str();
}

void write_results_csv(const fs::path& path, const ExperimentTable& table) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << results_csv(table);
}

void write_predictions_jsonl(const fs::path& path, const std::vector<TrajectoryWindow>& windows,
                             const std::vector<BoxSequence>& predictions) {
  if (windows.size() != predictions.size()) throw std::invalid_argument("predictions: count mismatch");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (Index s = 0; s < predictions[i].rows(); ++s) {
      json rec{{"video_id", windows[i].video_id},
               {"track_id", windows[i].track_id},
               {"t", windows[i].frame},
               {"horizon_step", s + 1},
               {"cx", predictions[i](s, 0)},
               {"cy", predictions[i](s, 1)},
               {"w", predictions[i](s, 2)},
               {"h", predictions[i](s, 3)}};
      out << rec.dump() << '\n';
    }
  }
}

std::vector<PredictionRecord> read_predictions_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::map<std::tuple<std::string, std::string, int>, std::map<Index, Eigen::RowVector4d>> grouped;
  std::vector<std::tuple<std::string, std::string, int>> order;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json r = json::parse(line);
      auto key = std::make_tuple(r.at("video_id").get<std::string>(), r.at("track_id").get<std::string>(),
                                 r.at("t").get<int>());
      if (!grouped.count(key)) order.push_back(key);
      grouped[key][r.at("horizon_step").get<Index>()] =
          Eigen::RowVector4d(r.at("cx").get<double>(), r.at("cy").get<double>(), r.at("w").get<double>(),
                             r.at("h").get<double>());
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::vector<PredictionRecord> out;
  for (const auto& key : order) {
    const auto& steps = grouped[key];
    PredictionRecord rec{std::get<0>(key), std::get<1>(key), std::get<2>(key), BoxSequence(steps.size(), 4)};
    Index expect = 1;
    for (const auto& [s, box] : steps) {
      if (s != expect++)
        throw ParseError(path.string() + ": missing horizon steps for " + rec.video_id + "/" + rec.track_id);
      rec.boxes.row(s - 1) = box;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

template Predictor model_predictor(MgNet<float>&, const EvalOptions&, ForwardMode, std::uint64_t);
template Predictor model_predictor(MgNet<double>&, const EvalOptions&, ForwardMode, std::uint64_t);

}  // namespace mgnet
