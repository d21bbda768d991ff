#pragma once

#include <optional>
#include <utility>

#include "mgnet/goal_evaluator.hpp"

namespace mgnet {

struct DecoderConfig {
  Index hidden_dim = 256;
  Index box_embed_dim = 32;
  Index rho = 45;
};

template <typename Scalar>
struct DecoderState {
  Var<Scalar> hidden;
  Var<Scalar> box;  // last emitted normalized box, batch x 4
  Index step = 1;   // next step to emit, 1-based
};

/// Forward recursive rollout. Each step feeds the embedded previous box and
/// the goal feature covering the step, emits a box delta, and accumulates it
/// onto the previous box (the anchor is the zero box in normalized space).
template <typename Scalar>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::string& name, Index init_dim, Index goal_feature_dim, const DecoderConfig& config,
          std::mt19937_64& rng);

  DecoderState<Scalar> init(const Context<Scalar>& ctx, Var<Scalar> h_x, std::optional<Var<Scalar>> h_a,
                            Var<Scalar> z);
  /// Returns the advanced state and the emitted delta.
  std::pair<DecoderState<Scalar>, Var<Scalar>> step(const Context<Scalar>& ctx, const DecoderState<Scalar>& state,
                                                    Var<Scalar> goal_feature);
  /// batch x 4rho absolute normalized boxes.
  Var<Scalar> operator()(const Context<Scalar>& ctx, Var<Scalar> h_x, std::optional<Var<Scalar>> h_a, Var<Scalar> z,
                         const GoalFeatures<Scalar>& goals);

  void collect(StateRefs<Scalar>& refs);
  const DecoderConfig& config() const { return config_; }

  Linear<Scalar> init_projection;
  Linear<Scalar> box_embedding;
  GruCell<Scalar> cell;
  Linear<Scalar> output_head;

 private:
  DecoderConfig config_;
};

}  // namespace mgnet
