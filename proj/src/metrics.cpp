#include "mgnet/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace mgnet {

namespace {

void check_pairs(const std::vector<BoxSequence>& pred, const std::vector<BoxSequence>& truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("metrics: prediction and truth counts differ");
  if (pred.empty()) throw std::invalid_argument("metrics: no samples");
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i].rows() != truth[i].rows()) throw std::invalid_argument("metrics: sequence lengths differ");
}

Index resolve(Index horizon, Index rho) {
  const Index h = horizon < 0 ? rho : horizon;
  if (h < 1 || h > rho)
    throw std::out_of_range("metrics: horizon " + std::to_string(h) + " outside [1, " + std::to_string(rho) + "]");
  return h;
}

Eigen::Matrix<double, Eigen::Dynamic, 4> corners(const BoxSequence& b, Index n) {
  Eigen::Matrix<double, Eigen::Dynamic, 4> c(n, 4);
  c.col(0) = b.col(0).head(n) - 0.5 * b.col(2).head(n);
  c.col(1) = b.col(1).head(n) - 0.5 * b.col(3).head(n);
  c.col(2) = b.col(0).head(n) + 0.5 * b.col(2).head(n);
  c.col(3) = b.col(1).head(n) + 0.5 * b.col(3).head(n);
  return c;
}

}  // namespace

double mse_bbox(const BoxSequence& pred, const BoxSequence& truth, Index horizon) {
  if (pred.rows() != truth.rows()) throw std::invalid_argument("metrics: sequence lengths differ");
  const Index h = resolve(horizon, pred.rows());
  return (corners(pred, h) - corners(truth, h)).squaredNorm() / static_cast<double>(4 * h);
}

double mse_bbox(const std::vector<BoxSequence>& pred, const std::vector<BoxSequence>& truth, Index horizon) {
  check_pairs(pred, truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += mse_bbox(pred[i], truth[i], horizon);
  return acc / static_cast<double>(pred.size());
}

double c_mse(const std::vector<BoxSequence>& pred, const std::vector<BoxSequence>& truth, Index horizon) {
  check_pairs(pred, truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Index h = resolve(horizon, pred[i].rows());
    acc += (pred[i].topLeftCorner(h, 2) - truth[i].topLeftCorner(h, 2)).squaredNorm() / static_cast<double>(2 * h);
  }
  return acc / static_cast<double>(pred.size());
}

double cf_mse(const std::vector<BoxSequence>& pred, const std::vector<BoxSequence>& truth, Index horizon) {
  check_pairs(pred, truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Index s = resolve(horizon, pred[i].rows()) - 1;
    acc += (pred[i].row(s).head<2>() - truth[i].row(s).head<2>()).squaredNorm() / 2.0;
  }
  return acc / static_cast<double>(pred.size());
}

std::vector<double> report_horizons(Index rho, double fps) {
  std::vector<double> out;
  for (double s : {0.5, 1.0, 1.5})
    if (static_cast<Index>(std::lround(s * fps)) <= rho) out.push_back(s);
  return out;
}

MetricReport compute_report(const std::vector<BoxSequence>& pred, const std::vector<BoxSequence>& truth, double fps) {
  check_pairs(pred, truth);
  MetricReport r;
  const Index rho = truth.front().rows();
  for (double s : report_horizons(rho, fps))
    r.mse_by_horizon[s] = mse_bbox(pred, truth, static_cast<Index>(std::lround(s * fps)));
  r.c_mse = c_mse(pred, truth);
  r.cf_mse = cf_mse(pred, truth);
  r.sample_count = pred.size();
  return r;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("average_reports: nothing to average");
  MetricReport out;
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    if (r.mse_by_horizon.size() != reports.front().mse_by_horizon.size())
      throw std::invalid_argument("average_reports: horizons differ");
    for (const auto& [s, v] : r.mse_by_horizon) out.mse_by_horizon[s] += v / n;
    out.c_mse += r.c_mse / n;
    out.cf_mse += r.cf_mse / n;
    out.sample_count = r.sample_count;
  }
  return out;
}

}  // namespace mgnet
