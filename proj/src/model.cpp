#include "mgnet/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace mgnet {

std::string ModelConfig::variant_name() const {
  if (attention && evaluator) return "+AT+ES";
  if (attention) return "+AT";
  if (evaluator) return "+ES";
  return "BL";
}

void ModelConfig::validate() const {
  if (tau < 1) throw std::invalid_argument("model: observation length must be at least 1");
  validate_stage_count(rho, k);
  if (hidden_dim < 1 || latent_dim < 1 || box_embed_dim < 1) throw std::invalid_argument("model: invalid widths");
  if (attention) attention_config.validate();
}

template <typename Scalar>
BatchTensors<Scalar> make_batch(const std::vector<TrajectoryWindow>& windows, const std::vector<std::size_t>& indices,
                                Index goal_count, bool with_future) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const auto& first = windows.at(indices.front());
  const Index tau = first.tau(), rho = first.rho();
  const auto times = stage_times(rho, goal_count);
  BatchTensors<Scalar> b;
  const Index n = static_cast<Index>(indices.size());
  b.observed.resize(n, 4 * tau);
  if (with_future) {
    b.future.resize(n, 4 * rho);
    b.goals.resize(n, 4 * goal_count);
  }
  for (Index i = 0; i < n; ++i) {
    const auto& w = windows.at(indices[static_cast<std::size_t>(i)]);
    if (!w.normalized) throw std::invalid_argument("make_batch: windows must be normalized");
    if (w.tau() != tau || w.rho() != rho) throw std::invalid_argument("make_batch: windows must share (tau, rho)");
    for (Index t = 0; t < tau; ++t) b.observed.row(i).segment(4 * t, 4) = w.observed.row(t).cast<Scalar>();
    if (!with_future) continue;
    for (Index t = 0; t < rho; ++t) b.future.row(i).segment(4 * t, 4) = w.future.row(t).cast<Scalar>();
    for (Index j = 0; j < goal_count; ++j)
      b.goals.row(i).segment(4 * j, 4) = w.future.row(times[static_cast<std::size_t>(j)] - 1).cast<Scalar>();
  }
  return b;
}

template <typename Scalar>
MgNet<Scalar>::MgNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const Index H = config_.hidden_dim;
  past_encoder = GruEncoder<Scalar>("past_encoder", 4, H, rng);
  future_encoder = GruEncoder<Scalar>("future_encoder", 4, H, rng);
  Index attention_dim = 0;
  if (config_.attention) {
    attention.emplace("attention", config_.attention_config, 4, rng);
    attention_dim = config_.attention_config.output_dim;
  }
  CvaeConfig cc;
  cc.past_dim = H;
  cc.future_dim = H;
  cc.attention_dim = attention_dim;
  cc.latent_dim = config_.latent_dim;
  cc.hidden_dim = H;
  cc.output_dim = H;
  cc.batch_norm = config_.batch_norm;
  cvae = Cvae<Scalar>("cvae", cc, rng);
  if (config_.uses_evaluator()) {
    EvaluatorConfig ec;
    ec.k = config_.k;
    ec.hidden_dim = H;
    ec.feature_dim = H;
    ec.rho = config_.rho;
    ec.auxiliary_coarse_loss = config_.auxiliary_coarse_loss;
    evaluator.emplace("evaluator", ec, H, rng);
  } else {
    long_term.emplace("long_term_goal", config_.rho, H, H, rng);
  }
  DecoderConfig dc;
  dc.hidden_dim = H;
  dc.box_embed_dim = config_.box_embed_dim;
  dc.rho = config_.rho;
  decoder = Decoder<Scalar>("decoder", H + attention_dim + config_.latent_dim, H, dc, rng);
}

template <typename Scalar>
ForwardOutput<Scalar> MgNet<Scalar>::forward(const Context<Scalar>& ctx, const Matrix<Scalar>& observed,
                                             const Matrix<Scalar>* future, ForwardMode mode, std::mt19937_64* rng,
                                             const StepProbe& probe) {
  std::optional<Var<Scalar>> fut;
  if (future) fut = ctx.tape.constant(*future);
  return forward(ctx, ctx.tape.constant(observed), fut, mode, rng, probe);
}

template <typename Scalar>
ForwardOutput<Scalar> MgNet<Scalar>::forward(const Context<Scalar>& ctx, Var<Scalar> observed,
                                             std::optional<Var<Scalar>> future, ForwardMode mode,
                                             std::mt19937_64* rng, const StepProbe& probe) {
  if (observed.cols() != 4 * config_.tau) throw std::invalid_argument("forward: observed must be batch x 4tau");
  if (future && (future->cols() != 4 * config_.rho || future->rows() != observed.rows()))
    throw std::invalid_argument("forward: future must be batch x 4rho");
  if (mode == ForwardMode::train && !future) throw std::logic_error("forward: training mode needs the future");
  if (mode != ForwardMode::prior_mean && !rng) throw std::invalid_argument("forward: sampling needs a generator");
  if (!observed.value().allFinite()) throw std::domain_error("forward: non-finite observed input");

  ForwardOutput<Scalar> out;
  Tape<Scalar>& tape = ctx.tape;
  const auto past_steps = split_steps(observed, 4);
  out.encoded.h_x = maybe_dropout(ctx, past_encoder(ctx, past_steps));
  if (future) out.encoded.h_y = maybe_dropout(ctx, future_encoder(ctx, split_steps(*future, 4)));
  if (attention) out.encoded.h_a = (*attention)(ctx, past_steps);

  out.prior = cvae.prior(ctx, out.encoded.h_x);
  if (out.encoded.h_y) out.posterior = cvae.recognition(ctx, out.encoded.h_x, out.encoded.h_y);

  const Index batch = observed.rows();
  auto noise = [&] {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix<Scalar> eps(batch, config_.latent_dim);
    for (Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<Scalar>(normal(*rng));
    return tape.constant(std::move(eps));
  };
  switch (mode) {
    case ForwardMode::train:
      out.z = reparameterize(*out.posterior, noise());
      out.source = LatentSource::recognition;
      break;
    case ForwardMode::prior_sample:
      out.z = reparameterize(out.prior, noise());
      out.source = LatentSource::prior;
      break;
    case ForwardMode::prior_mean:
      out.z = out.prior.mu;
      out.source = LatentSource::prior_mean;
      break;
  }

  out.h_g = cvae.generate(ctx, out.encoded.h_x, out.z, out.encoded.h_a);
  if (evaluator) {
    out.goal_features = (*evaluator)(ctx, out.h_g, probe);
    out.goals = evaluator->project_goals(ctx, out.goal_features);
    if (evaluator->coarse_head) out.coarse_goals = evaluator->project_coarse(ctx, out.goal_features);
  } else {
    out.goal_features = (*long_term)(ctx, out.h_g);
    out.goals = long_term->project_goals(ctx, out.goal_features);
  }
  out.pred = decoder(ctx, out.encoded.h_x, out.encoded.h_a, out.z, out.goal_features);
  return out;
}

template <typename Scalar>
StateRefs<Scalar> MgNet<Scalar>::state() {
  StateRefs<Scalar> refs;
  past_encoder.collect(refs);
  future_encoder.collect(refs);
  if (attention) attention->collect(refs);
  cvae.collect(refs);
  if (evaluator) evaluator->collect(refs);
  if (long_term) long_term->collect(refs);
  decoder.collect(refs);
  return refs;
}

template <typename Scalar>
std::vector<BoxSequence> predict_normalized(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& windows,
                                            ForwardMode mode, std::uint64_t seed, std::size_t batch_size) {
  if (mode == ForwardMode::train) throw std::invalid_argument("predict: training mode is not a prediction mode");
  std::vector<BoxSequence> out;
  out.reserve(windows.size());
  std::mt19937_64 rng(seed);
  const Index rho = model.config().rho;
  Tape<Scalar> tape;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(windows.size(), start + batch_size); ++i) idx.push_back(i);
    const auto batch = make_batch<Scalar>(windows, idx, model.config().goal_count(), false);
    tape.clear();
    Context<Scalar> ctx{tape, false, nullptr, Scalar(0)};
    const auto fwd = model.forward(ctx, batch.observed, nullptr, mode, &rng);
    const Matrix<Scalar>& pred = fwd.pred.value();
    for (Index i = 0; i < pred.rows(); ++i) {
      BoxSequence seq(rho, 4);
      for (Index t = 0; t < rho; ++t) seq.row(t) = pred.row(i).segment(4 * t, 4).template cast<double>();
      out.push_back(std::move(seq));
    }
  }
  return out;
}

#define MGNET_INSTANTIATE_MODEL(S)                                                                            \
  template BatchTensors<S> make_batch<S>(const std::vector<TrajectoryWindow>&, const std::vector<std::size_t>&, \
                                         Index, bool);                                                        \
  template class MgNet<S>;                                                                                    \
  template std::vector<BoxSequence> predict_normalized(MgNet<S>&, const std::vector<TrajectoryWindow>&,       \
                                                       ForwardMode, std::uint64_t, std::size_t);

MGNET_INSTANTIATE_MODEL(float)
MGNET_INSTANTIATE_MODEL(double)

}  // namespace mgnet
