#pragma once

#include <map>
#include <vector>

#include "mgnet/tensor.hpp"

namespace mgnet {

/// Corner-coordinate MSE in pixels^2 over the first `horizon` steps: mean over
/// (x1, y1, x2, y2), then steps, then samples.
double mse_bbox(const std::vector<BoxSequence>& pred, const std::vector<BoxSequence>& truth, Index horizon);
double mse_bbox(const BoxSequence& pred, const BoxSequence& truth, Index horizon);

/// Centroid MSE over the first `horizon` steps (-1: all steps).
double c_mse(const std::vector<BoxSequence>& pred, const std::vector<BoxSequence>& truth, Index horizon = -1);
/// Centroid MSE at step `horizon` only (-1: the final step).
double cf_mse(const std::vector<BoxSequence>& pred, const std::vector<BoxSequence>& truth, Index horizon = -1);

struct MetricReport {
  std::map<double, double> mse_by_horizon;  // seconds -> pixels^2
  double c_mse = 0.0;
  double cf_mse = 0.0;
  std::size_t sample_count = 0;
};

/// Horizons (seconds) whose step count fits in rho at `fps`, from {0.5, 1.0, 1.5}.
std::vector<double> report_horizons(Index rho, double fps);

/// MSE at every reported horizon; C_MSE and CF_MSE over the full horizon.
MetricReport compute_report(const std::vector<BoxSequence>& pred, const std::vector<BoxSequence>& truth,
                            double fps = 30.0);

/// Element-wise mean of reports sharing horizons.
MetricReport average_reports(const std::vector<MetricReport>& reports);

}  // namespace mgnet
