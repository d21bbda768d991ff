#include "mgnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace mgnet {

LossReport total_loss(double l_pred, double l_goals, double kld, double l_coarse) {
  LossReport r;
  r.l_pred = l_pred;
  r.l_goals = l_goals;
  r.kld = kld;
  r.l_coarse = l_coarse;
  r.total = l_pred + l_goals + kld + l_coarse;
  return r;
}

double loss_pred(const BoxSequence& pred, const BoxSequence& truth) {
  if (pred.rows() != truth.rows() || pred.rows() == 0) throw std::invalid_argument("loss_pred: shape mismatch");
  return (pred - truth).rowwise().squaredNorm().mean();
}

double loss_goals(const BoxSequence& goals, const std::vector<Index>& goal_times, const StageGoalTargets& targets) {
  if (goal_times != targets.times) throw std::invalid_argument("loss_goals: goal times are not aligned with targets");
  if (goals.rows() != targets.goals.rows()) throw std::invalid_argument("loss_goals: shape mismatch");
  return (goals - targets.goals).rowwise().squaredNorm().mean();
}

template <typename Scalar>
Var<Scalar> loss_pred(Var<Scalar> pred, Var<Scalar> truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() || pred.cols() % 4 != 0)
    throw std::invalid_argument("loss_pred: shape mismatch");
  const Index steps = pred.cols() / 4;
  return scale(sum(square(pred - truth)), Scalar(1) / static_cast<Scalar>(pred.rows() * steps));
}

template <typename Scalar>
Var<Scalar> loss_goals(Var<Scalar> goals, Var<Scalar> targets) {
  return loss_pred(goals, targets);
}

template <typename Scalar>
LossReport LossVars<Scalar>::report() const {
  return total_loss(l_pred.value()(0, 0), l_goals.value()(0, 0), kld.value()(0, 0),
                    l_coarse ? static_cast<double>(l_coarse->value()(0, 0)) : 0.0);
}

template <typename Scalar>
LossVars<Scalar> compute_losses(MgNet<Scalar>& model, const Context<Scalar>& ctx, const BatchTensors<Scalar>& batch,
                                ForwardMode mode, std::mt19937_64* rng, ForwardOutput<Scalar>* forward) {
  if (!batch.has_future()) throw std::invalid_argument("compute_losses: batch lacks the future");
  ForwardOutput<Scalar> out = model.forward(ctx, batch.observed, &batch.future, mode, rng);
  Tape<Scalar>& tape = ctx.tape;
  LossVars<Scalar> l;
  l.l_pred = loss_pred(out.pred, tape.constant(batch.future));
  l.l_goals = loss_goals(out.goals, tape.constant(batch.goals));
  l.kld = kl_divergence(*out.posterior, out.prior);
  l.total = l.l_pred + l.l_goals + l.kld;
  if (out.coarse_goals) {
    const auto times = coarse_boundaries(model.config().rho, 3);
    Matrix<Scalar> targets(batch.size(), 4 * static_cast<Index>(times.size()));
    for (std::size_t j = 0; j < times.size(); ++j)
      targets.middleCols(4 * static_cast<Index>(j), 4) = batch.future.middleCols(4 * (times[j] - 1), 4);
    l.l_coarse = loss_goals(*out.coarse_goals, tape.constant(std::move(targets)));
    l.total = l.total + *l.l_coarse;
  }
  if (forward) *forward = std::move(out);
  return l;
}

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<Parameter<Scalar>*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  for (auto* p : params_) {
    m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename Scalar>
void Adam<Scalar>::step() {
  ++t_;
  const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const Scalar lr = static_cast<Scalar>(lr_), eps = static_cast<Scalar>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    m_[i] = b1 * m_[i] + (Scalar(1) - b1) * p.grad;
    v_[i] = b2 * v_[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

template <typename Scalar>
void Adam<Scalar>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename Scalar>
double clip_grad_norm(const std::vector<Parameter<Scalar>*>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) sq += p->grad.template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Scalar factor = static_cast<Scalar>(max_norm / (norm + 1e-6));
    for (auto* p : params) p->grad *= factor;
  }
  return norm;
}

PlateauScheduler::PlateauScheduler(double lr, double factor, int patience, double min_lr)
    : lr_(lr), factor_(factor), min_lr_(min_lr), patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (!(factor > 0.0 && factor < 1.0)) throw std::invalid_argument("plateau factor must lie in (0, 1)");
  if (patience < 0) throw std::invalid_argument("plateau patience must be non-negative");
}

bool PlateauScheduler::step(double metric) {
  if (metric < best_) {
    best_ = metric;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ <= patience_) return false;
  bad_epochs_ = 0;
  const double next = std::max(lr_ * factor_, min_lr_);
  const bool reduced = next < lr_;
  lr_ = next;
  return reduced;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be at least 1");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("train: dropout must lie in [0, 1)");
}

template <typename Scalar>
LossReport evaluate_loss(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& windows, std::size_t batch_size) {
  if (windows.empty()) throw std::invalid_argument("evaluate_loss: no windows");
  Tape<Scalar> tape;
  LossReport acc;
  double weight = 0.0;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, windows.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = make_batch<Scalar>(windows, idx, model.config().goal_count());
    tape.clear();
    Context<Scalar> ctx{tape, false, nullptr, Scalar(0)};
    const LossReport r = compute_losses(model, ctx, batch, ForwardMode::prior_mean, nullptr).report();
    const double w = static_cast<double>(idx.size());
    acc.l_pred += w * r.l_pred;
    acc.l_goals += w * r.l_goals;
    acc.kld += w * r.kld;
    acc.l_coarse += w * r.l_coarse;
    weight += w;
  }
  return total_loss(acc.l_pred / weight, acc.l_goals / weight, acc.kld / weight, acc.l_coarse / weight);
}

namespace {

template <typename Scalar>
std::vector<Matrix<Scalar>> snapshot(StateRefs<Scalar>& refs) {
  std::vector<Matrix<Scalar>> s;
  for (auto* p : refs.params) s.push_back(p->value);
  for (auto& b : refs.buffers) s.push_back(*b.second);
  return s;
}

template <typename Scalar>
void restore(StateRefs<Scalar>& refs, const std::vector<Matrix<Scalar>>& s) {
  std::size_t i = 0;
  for (auto* p : refs.params) p->value = s[i++];
  for (auto& b : refs.buffers) *b.second = s[i++];
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

template <typename Scalar>
void recalibrate_batch_norm(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& windows,
                            std::size_t batch_size, std::mt19937_64& rng) {
  auto refs = model.state();
  if (refs.batch_norms.empty() || windows.size() < 2) return;
  std::vector<Scalar> momenta;
  for (auto* bn : refs.batch_norms) momenta.push_back(bn->momentum);
  Tape<Scalar> tape;
  int updates = 0;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, windows.size() - start);
    if (n < 2) break;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = make_batch<Scalar>(windows, idx, model.config().goal_count());
    ++updates;
    for (auto* bn : refs.batch_norms) bn->momentum = Scalar(1) / static_cast<Scalar>(updates);
    tape.clear();
    Context<Scalar> ctx{tape, true, &rng, Scalar(0)};
    model.forward(ctx, tape.constant(batch.observed), tape.constant(batch.future), ForwardMode::train, &rng);
  }
  for (std::size_t i = 0; i < momenta.size(); ++i) refs.batch_norms[i]->momentum = momenta[i];
}

template <typename Scalar>
FitResult fit(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& train, const std::vector<TrajectoryWindow>& val,
              const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("fit: training split has no windows");
  if (val.empty()) throw std::invalid_argument("fit: validation split has no windows");

  std::mt19937_64 rng(config.seed);
  auto refs = model.state();
  Adam<Scalar> adam(refs.params, config.lr);
  PlateauScheduler scheduler(config.lr, config.plateau_factor, config.plateau_patience);

  std::ofstream log;
  if (!config.log_path.empty()) {
    if (config.log_path.has_parent_path()) std::filesystem::create_directories(config.log_path.parent_path());
    log.open(config.log_path, std::ios::binary);
    if (!log) throw std::runtime_error("cannot write training log " + config.log_path.string());
    log << "epoch,lr,l_pred,l_goals,kld,total,val_total\n" << std::setprecision(10);
  }

  FitResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  std::vector<Matrix<Scalar>> best_state = snapshot(refs);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Tape<Scalar> tape;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossReport acc;
    double seen = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + config.batch_size)));
      const auto batch = make_batch<Scalar>(train, idx, model.config().goal_count());
      tape.clear();
      Context<Scalar> ctx{tape, true, &rng, static_cast<Scalar>(config.dropout)};
      adam.zero_grad();
      const auto losses = compute_losses(model, ctx, batch, ForwardMode::train, &rng);
      const LossReport r = losses.report();
      if (!std::isfinite(r.total)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch " << batch_no << " (l_pred=" << r.l_pred
           << ", l_goals=" << r.l_goals << ", kld=" << r.kld << ")";
        throw TrainingDivergence(os.str());
      }
      tape.backward(losses.total);
      clip_grad_norm(refs.params, config.clip_norm);
      adam.step();
      const double w = static_cast<double>(idx.size());
      acc.l_pred += w * r.l_pred;
      acc.l_goals += w * r.l_goals;
      acc.kld += w * r.kld;
      acc.l_coarse += w * r.l_coarse;
      seen += w;
    }

    if (config.recalibrate_bn) recalibrate_batch_norm(model, train, config.batch_size, rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = adam.lr();
    rec.train = total_loss(acc.l_pred / seen, acc.l_goals / seen, acc.kld / seen, acc.l_coarse / seen);
    rec.val_total = evaluate_loss(model, val).total;
    if (!std::isfinite(rec.val_total)) {
      throw TrainingDivergence("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (log)
      log << rec.epoch << ',' << rec.lr << ',' << rec.train.l_pred << ',' << rec.train.l_goals << ',' << rec.train.kld
          << ',' << rec.train.total << ',' << rec.val_total << '\n'
          << std::flush;

    if (rec.val_total < result.best_val) {
      result.best_val = rec.val_total;
      result.best_epoch = epoch;
      best_state = snapshot(refs);
      if (!config.checkpoint_path.empty()) {
        CheckpointInfo info;
        info.model = model.config();
        info.epoch = epoch;
        info.val_loss = rec.val_total;
        info.rng_state = rng_text(rng);
        save_checkpoint(config.checkpoint_path, model, info);
      }
    }
    scheduler.step(rec.val_total);
    adam.set_lr(scheduler.lr());
    if (on_epoch) on_epoch(rec);
  }
  restore(refs, best_state);
  return result;
}

#define MGNET_INSTANTIATE_TRAINING(S)                                                                         \
  template Var<S> loss_pred(Var<S>, Var<S>);                                                                  \
  template Var<S> loss_goals(Var<S>, Var<S>);                                                                 \
  template struct LossVars<S>;                                                                                \
  template LossVars<S> compute_losses(MgNet<S>&, const Context<S>&, const BatchTensors<S>&, ForwardMode,      \
                                      std::mt19937_64*, ForwardOutput<S>*);                                   \
  template class Adam<S>;                                                                                     \
  template double clip_grad_norm(const std::vector<Parameter<S>*>&, double);                                  \
  template LossReport evaluate_loss(MgNet<S>&, const std::vector<TrajectoryWindow>&, std::size_t);            \
  template void recalibrate_batch_norm(MgNet<S>&, const std::vector<TrajectoryWindow>&, std::size_t,            \
                                       std::mt19937_64&);                                                     \
  template FitResult fit(MgNet<S>&, const std::vector<TrajectoryWindow>&, const std::vector<TrajectoryWindow>&, \
                         const TrainConfig&, const EpochCallback&);

MGNET_INSTANTIATE_TRAINING(float)
MGNET_INSTANTIATE_TRAINING(double)

}  // namespace mgnet
