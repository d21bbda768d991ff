#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgnet/checkpoint.hpp"
#include "mgnet/model.hpp"

namespace mgnet {

/// Raised when a loss becomes non-finite; the message names epoch and batch.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossReport {
  double l_pred = 0.0;
  double l_goals = 0.0;
  double kld = 0.0;
  double l_coarse = 0.0;  // auxiliary, zero unless enabled
  double total = 0.0;
};

/// Unit-weight sum of the components.
LossReport total_loss(double l_pred, double l_goals, double kld, double l_coarse = 0.0);

/// Mean over steps of the squared L2 distance between 4-dim rows.
double loss_pred(const BoxSequence& pred, const BoxSequence& truth);
/// Mean over goals of the squared L2 row distance; `goal_times` must equal targets.times.
double loss_goals(const BoxSequence& goals, const std::vector<Index>& goal_times, const StageGoalTargets& targets);

/// Batched forms on a tape: both operands B x 4n, averaged over B and n.
template <typename Scalar>
Var<Scalar> loss_pred(Var<Scalar> pred, Var<Scalar> truth);
template <typename Scalar>
Var<Scalar> loss_goals(Var<Scalar> goals, Var<Scalar> targets);

template <typename Scalar>
struct LossVars {
  Var<Scalar> l_pred;
  Var<Scalar> l_goals;
  Var<Scalar> kld;
  std::optional<Var<Scalar>> l_coarse;
  Var<Scalar> total;

  LossReport report() const;
};

/// Forward pass plus the three-term objective. The future must be present.
template <typename Scalar>
LossVars<Scalar> compute_losses(MgNet<Scalar>& model, const Context<Scalar>& ctx, const BatchTensors<Scalar>& batch,
                                ForwardMode mode, std::mt19937_64* rng, ForwardOutput<Scalar>* forward = nullptr);

/// Adaptive-moment gradient descent.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Parameter<Scalar>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step();
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  std::vector<Matrix<Scalar>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Global L2 norm of all gradients, rescaled to `max_norm` when larger.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(const std::vector<Parameter<Scalar>*>& params, double max_norm);

/// Multiplies the rate by `factor` after `patience` epochs without a strict
/// improvement of the monitored loss.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor = 0.5, int patience = 5, double min_lr = 0.0);

  /// Returns true when the rate was reduced.
  bool step(double metric);
  double lr() const { return lr_; }
  double best() const { return best_; }
  int bad_epochs() const { return bad_epochs_; }

 private:
  double lr_, factor_, min_lr_;
  int patience_;
  double best_;
  int bad_epochs_ = 0;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 128;
  int epochs = 100;
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  std::uint64_t seed = 0;
  double dropout = 0.1;
  double clip_norm = 1.0;  // <= 0 disables clipping
  bool recalibrate_bn = true;  // re-estimate BatchNorm statistics after every epoch
  std::filesystem::path log_path;         // CSV, optional
  std::filesystem::path checkpoint_path;  // best checkpoint, optional

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  LossReport train;
  double val_total = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mean losses over `windows` with z = prior mean, weighted by batch size.
template <typename Scalar>
LossReport evaluate_loss(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& windows,
                         std::size_t batch_size = 256);

/// Replaces BatchNorm running statistics with the cumulative average of batch
/// statistics over `windows` under the current weights.
template <typename Scalar>
void recalibrate_batch_norm(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& windows,
                            std::size_t batch_size, std::mt19937_64& rng);

/// Mini-batch training with validation, plateau scheduling and best-state
/// retention. Windows must be normalized. On return the model holds the
/// weights of the best validation epoch.
template <typename Scalar>
FitResult fit(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& train,
              const std::vector<TrajectoryWindow>& val, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

}  // namespace mgnet
