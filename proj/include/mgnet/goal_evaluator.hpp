#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgnet/layers.hpp"

namespace mgnet {

/// Step offsets (j + 1) * rho / k for j = 0..k-1. Throws unless k divides rho.
std::vector<Index> stage_times(Index rho, Index k);

/// Boundaries of the coarse stages: multiples of ceil(rho / stages), the last
/// clamped to rho. For rho divisible by 3 and three stages: {rho/3, 2rho/3, rho}.
std::vector<Index> coarse_boundaries(Index rho, Index stages = 3);

/// 0-based index of the first boundary >= step, i.e. the stage whose time
/// interval contains `step`.
Index covering_index(Index step, std::span<const Index> boundaries);

/// For every fine stage j, the 0-based coarse stage that covers its time.
std::vector<Index> coarse_cover_map(Index rho, Index k, Index stages = 3);

void validate_stage_count(Index rho, Index k);

struct EvaluatorConfig {
  Index k = 9;
  Index coarse_stages = 3;
  Index hidden_dim = 256;
  Index feature_dim = 256;
  Index rho = 45;
  bool auxiliary_coarse_loss = false;

  bool bypassed() const { return k == 1; }
  void validate() const;
};

/// Step visitor for instrumentation: (layer name, absolute step offset).
using StepProbe = std::function<void(const std::string&, Index)>;

template <typename Scalar>
struct GoalFeatures {
  std::vector<Var<Scalar>> features;  // ascending in time, one batch x feature_dim each
  std::vector<Index> times;
  std::vector<Var<Scalar>> coarse;  // empty for the long-term-goal head
};

/// Double-layer reverse recurrence: a coarse layer reads out three stage
/// features, a fine layer reads out k features, each fused with the coarse
/// feature whose stage covers its time.
template <typename Scalar>
class GoalEvaluator {
 public:
  GoalEvaluator() = default;
  GoalEvaluator(const std::string& name, const EvaluatorConfig& config, Index input_dim, std::mt19937_64& rng);

  std::vector<Var<Scalar>> coarse_pass(const Context<Scalar>& ctx, Var<Scalar> h_g, const StepProbe& probe = {});
  GoalFeatures<Scalar> fine_pass(const Context<Scalar>& ctx, Var<Scalar> h_g, const std::vector<Var<Scalar>>& coarse,
                                 const StepProbe& probe = {});
  GoalFeatures<Scalar> operator()(const Context<Scalar>& ctx, Var<Scalar> h_g, const StepProbe& probe = {});

  /// Fully connected map of every feature to a normalized box: batch x 4k.
  Var<Scalar> project_goals(const Context<Scalar>& ctx, const GoalFeatures<Scalar>& features);
  /// Coarse features projected to boxes (batch x 12); only with the auxiliary loss enabled.
  Var<Scalar> project_coarse(const Context<Scalar>& ctx, const GoalFeatures<Scalar>& features);

  void collect(StateRefs<Scalar>& refs);
  const EvaluatorConfig& config() const { return config_; }

  Linear<Scalar> input_projection;
  GruCell<Scalar> coarse_cell;
  GruCell<Scalar> fine_cell;
  Linear<Scalar> fuse;
  Linear<Scalar> goal_head;
  std::optional<Linear<Scalar>> coarse_head;

 private:
  std::vector<Var<Scalar>> reverse_readout(const Context<Scalar>& ctx, GruCell<Scalar>& cell, Var<Scalar> projected,
                                           Var<Scalar> h_g, const std::vector<Index>& readout_steps,
                                           const std::string& layer, const StepProbe& probe);
  EvaluatorConfig config_;
};

/// Single long-term goal at step rho, used when k == 1.
template <typename Scalar>
class LongTermGoal {
 public:
  LongTermGoal() = default;
  LongTermGoal(const std::string& name, Index rho, Index input_dim, Index feature_dim, std::mt19937_64& rng);

  GoalFeatures<Scalar> operator()(const Context<Scalar>& ctx, Var<Scalar> h_g);
  Var<Scalar> project_goals(const Context<Scalar>& ctx, const GoalFeatures<Scalar>& features);
  void collect(StateRefs<Scalar>& refs);

  Linear<Scalar> feature_head;
  Linear<Scalar> goal_head;

 private:
  Index rho_ = 1;
};

}  // namespace mgnet
