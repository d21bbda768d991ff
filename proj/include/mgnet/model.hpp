#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mgnet/cvae.hpp"
#include "mgnet/decoder.hpp"
#include "mgnet/encoder.hpp"
#include "mgnet/trajectory_data.hpp"

namespace mgnet {

struct ModelConfig {
  Index tau = 15;
  Index rho = 45;
  Index k = 9;
  bool attention = true;   // AT
  bool evaluator = true;   // ES; without it a single long-term goal guides decoding
  Index hidden_dim = 256;
  Index latent_dim = 32;
  Index box_embed_dim = 32;
  AttentionConfig attention_config;
  bool batch_norm = true;
  bool auxiliary_coarse_loss = false;

  /// True when the double-layer evaluator is instantiated (ES and k > 1).
  bool uses_evaluator() const { return evaluator && k > 1; }
  /// Number of supervised stage goals.
  Index goal_count() const { return uses_evaluator() ? k : 1; }
  std::string variant_name() const;
  void validate() const;
};

enum class ForwardMode {
  train,        // z from the recognition network
  prior_sample, // z sampled from the conditional prior
  prior_mean    // z = prior mean
};

/// Normalized window tensors, one row per sample.
template <typename Scalar>
struct BatchTensors {
  Matrix<Scalar> observed;  // B x 4tau, step-major
  Matrix<Scalar> future;    // B x 4rho; empty when unknown
  Matrix<Scalar> goals;     // B x 4G stage-goal targets; empty when unknown

  Index size() const { return observed.rows(); }
  bool has_future() const { return future.size() > 0; }
};

/// Stacks normalized windows into batch tensors with `goal_count` stage targets.
template <typename Scalar>
BatchTensors<Scalar> make_batch(const std::vector<TrajectoryWindow>& windows, const std::vector<std::size_t>& indices,
                                Index goal_count, bool with_future = true);

template <typename Scalar>
struct ForwardOutput {
  Var<Scalar> pred;                  // B x 4rho normalized boxes
  Var<Scalar> goals;                 // B x 4G normalized stage goals
  std::optional<Var<Scalar>> coarse_goals;
  std::optional<LatentVars<Scalar>> posterior;
  LatentVars<Scalar> prior;
  Var<Scalar> z;
  LatentSource source = LatentSource::prior_mean;
  EncodedFeatures<Scalar> encoded;
  Var<Scalar> h_g;
  GoalFeatures<Scalar> goal_features;
};

/// Complete predictor: past/future recurrent encoders, optional attention
/// branch, CVAE, goal guidance and the recursive decoder.
template <typename Scalar>
class MgNet {
 public:
  MgNet() = default;
  MgNet(const ModelConfig& config, std::uint64_t seed);

  /// `observed` is B x 4tau. `future` (B x 4rho) is encoded whenever given,
  /// and is required in train mode. `rng` draws the latent noise for the
  /// sampling modes and dropout masks in training.
  ForwardOutput<Scalar> forward(const Context<Scalar>& ctx, const Matrix<Scalar>& observed,
                                const Matrix<Scalar>* future, ForwardMode mode, std::mt19937_64* rng,
                                const StepProbe& probe = {});
  /// Same on tape values, so gradients can reach the inputs.
  ForwardOutput<Scalar> forward(const Context<Scalar>& ctx, Var<Scalar> observed, std::optional<Var<Scalar>> future,
                                ForwardMode mode, std::mt19937_64* rng, const StepProbe& probe = {});

  /// Learnable tensors and buffers in a fixed order.
  StateRefs<Scalar> state();
  const ModelConfig& config() const { return config_; }

  GruEncoder<Scalar> past_encoder;
  GruEncoder<Scalar> future_encoder;
  std::optional<AttentionEncoder<Scalar>> attention;
  Cvae<Scalar> cvae;
  std::optional<GoalEvaluator<Scalar>> evaluator;
  std::optional<LongTermGoal<Scalar>> long_term;
  Decoder<Scalar> decoder;

 private:
  ModelConfig config_;
};

/// Normalized predictions for normalized windows, batched in eval mode.
template <typename Scalar>
std::vector<BoxSequence> predict_normalized(MgNet<Scalar>& model, const std::vector<TrajectoryWindow>& windows,
                                            ForwardMode mode = ForwardMode::prior_mean, std::uint64_t seed = 0,
                                            std::size_t batch_size = 256);

}  // namespace mgnet
