#include "mgnet/goal_evaluator.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace mgnet {

void validate_stage_count(Index rho, Index k) {
  if (rho < 1) throw std::invalid_argument("prediction horizon must be at least 1 step");
  if (k < 1 || k > rho)
    throw std::invalid_argument("stage count k=" + std::to_string(k) + " must lie in [1, " + std::to_string(rho) + "]");
  if (rho % k != 0)
    throw std::invalid_argument("stage count k=" + std::to_string(k) + " does not divide horizon " +
                                std::to_string(rho));
}

std::vector<Index> stage_times(Index rho, Index k) {
  validate_stage_count(rho, k);
  std::vector<Index> times;
  for (Index j = 1; j <= k; ++j) times.push_back(j * rho / k);
  return times;
}

std::vector<Index> coarse_boundaries(Index rho, Index stages) {
  if (rho < 1 || stages < 1) throw std::invalid_argument("coarse_boundaries: invalid arguments");
  const Index spacing = (rho + stages - 1) / stages;
  std::vector<Index> b;
  for (Index j = 1; j <= stages; ++j) b.push_back(std::min(j * spacing, rho));
  b.back() = rho;
  return b;
}

Index covering_index(Index step, std::span<const Index> boundaries) {
  for (std::size_t i = 0; i < boundaries.size(); ++i)
    if (boundaries[i] >= step) return static_cast<Index>(i);
  throw std::out_of_range("covering_index: step " + std::to_string(step) + " lies beyond the last boundary");
}

std::vector<Index> coarse_cover_map(Index rho, Index k, Index stages) {
  const auto fine = stage_times(rho, k);
  const auto coarse = coarse_boundaries(rho, stages);
  std::vector<Index> map;
  for (Index t : fine) map.push_back(covering_index(t, coarse));
  return map;
}

void EvaluatorConfig::validate() const {
  validate_stage_count(rho, k);
  if (coarse_stages < 1) throw std::invalid_argument("evaluator: coarse stage count must be positive");
  if (hidden_dim < 1 || feature_dim < 1) throw std::invalid_argument("evaluator: invalid widths");
}

template <typename Scalar>
GoalEvaluator<Scalar>::GoalEvaluator(const std::string& name, const EvaluatorConfig& config, Index input_dim,
                                     std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  if (config_.bypassed())
    throw std::invalid_argument("evaluator is bypassed for k=1; use the long-term goal head");
  if (input_dim != config_.hidden_dim)
    throw std::invalid_argument("evaluator: hidden width must equal the width of h_G it is initialized from");
  input_projection = Linear<Scalar>(name + ".input_projection", input_dim, config_.hidden_dim, rng);
  coarse_cell = GruCell<Scalar>(name + ".coarse", config_.hidden_dim, config_.hidden_dim, rng);
  fine_cell = GruCell<Scalar>(name + ".fine", config_.hidden_dim, config_.hidden_dim, rng);
  fuse = Linear<Scalar>(name + ".fuse", 2 * config_.hidden_dim, config_.feature_dim, rng);
  goal_head = Linear<Scalar>(name + ".goal_head", config_.feature_dim, 4, rng);
  if (config_.auxiliary_coarse_loss) coarse_head = Linear<Scalar>(name + ".coarse_head", config_.hidden_dim, 4, rng);
}

template <typename Scalar>
std::vector<Var<Scalar>> GoalEvaluator<Scalar>::reverse_readout(const Context<Scalar>& ctx, GruCell<Scalar>& cell,
                                                                Var<Scalar> projected, Var<Scalar> h_g,
                                                                const std::vector<Index>& readout_steps,
                                                                const std::string& layer, const StepProbe& probe) {
  // The projected h_G is the input at every step, so its gate projection is shared.
  Var<Scalar> gates = cell.input_gates(ctx, projected);
  Var<Scalar> h = h_g;
  std::map<Index, Var<Scalar>> at_step;
  for (Index s = config_.rho; s >= 1; --s) {
    if (probe) probe(layer, s);
    h = cell.step(ctx, gates, h);
    at_step[s] = h;
  }
  std::vector<Var<Scalar>> out;
  for (Index s : readout_steps) out.push_back(at_step.at(s));
  return out;
}

template <typename Scalar>
std::vector<Var<Scalar>> GoalEvaluator<Scalar>::coarse_pass(const Context<Scalar>& ctx, Var<Scalar> h_g,
                                                            const StepProbe& probe) {
  Var<Scalar> projected = relu(input_projection(ctx, h_g));
  return reverse_readout(ctx, coarse_cell, projected, h_g, coarse_boundaries(config_.rho, config_.coarse_stages),
                         "coarse", probe);
}

template <typename Scalar>
GoalFeatures<Scalar> GoalEvaluator<Scalar>::fine_pass(const Context<Scalar>& ctx, Var<Scalar> h_g,
                                                      const std::vector<Var<Scalar>>& coarse, const StepProbe& probe) {
  if (config_.bypassed()) throw std::logic_error("fine pass is bypassed for k=1; use the long-term goal head");
  if (static_cast<Index>(coarse.size()) != config_.coarse_stages)
    throw std::invalid_argument("fine pass: wrong number of coarse features");
  GoalFeatures<Scalar> out;
  out.times = stage_times(config_.rho, config_.k);
  out.coarse = coarse;
  Var<Scalar> projected = relu(input_projection(ctx, h_g));
  auto hidden = reverse_readout(ctx, fine_cell, projected, h_g, out.times, "fine", probe);
  const auto cover = coarse_cover_map(config_.rho, config_.k, config_.coarse_stages);
  for (std::size_t j = 0; j < hidden.size(); ++j) {
    Var<Scalar> joined = concat_cols<Scalar>({hidden[j], coarse[static_cast<std::size_t>(cover[j])]});
    out.features.push_back(relu(fuse(ctx, joined)));
  }
  return out;
}

template <typename Scalar>
GoalFeatures<Scalar> GoalEvaluator<Scalar>::operator()(const Context<Scalar>& ctx, Var<Scalar> h_g,
                                                       const StepProbe& probe) {
  return fine_pass(ctx, h_g, coarse_pass(ctx, h_g, probe), probe);
}

template <typename Scalar>
Var<Scalar> GoalEvaluator<Scalar>::project_goals(const Context<Scalar>& ctx, const GoalFeatures<Scalar>& features) {
  std::vector<Var<Scalar>> boxes;
  for (const auto& f : features.features) {
    if (!f.value().allFinite()) throw std::domain_error("project_goals: non-finite goal feature");
    boxes.push_back(goal_head(ctx, f));
  }
  return concat_cols(boxes);
}

template <typename Scalar>
Var<Scalar> GoalEvaluator<Scalar>::project_coarse(const Context<Scalar>& ctx, const GoalFeatures<Scalar>& features) {
  if (!coarse_head) throw std::logic_error("coarse projection requires the auxiliary coarse loss");
  std::vector<Var<Scalar>> boxes;
  for (const auto& c : features.coarse) boxes.push_back((*coarse_head)(ctx, c));
  return concat_cols(boxes);
}

template <typename Scalar>
void GoalEvaluator<Scalar>::collect(StateRefs<Scalar>& refs) {
  input_projection.collect(refs);
  coarse_cell.collect(refs);
  fine_cell.collect(refs);
  fuse.collect(refs);
  goal_head.collect(refs);
  if (coarse_head) coarse_head->collect(refs);
}

template <typename Scalar>
LongTermGoal<Scalar>::LongTermGoal(const std::string& name, Index rho, Index input_dim, Index feature_dim,
                                   std::mt19937_64& rng)
    : feature_head(name + ".feature_head", input_dim, feature_dim, rng),
      goal_head(name + ".goal_head", feature_dim, 4, rng),
      rho_(rho) {}

template <typename Scalar>
GoalFeatures<Scalar> LongTermGoal<Scalar>::operator()(const Context<Scalar>& ctx, Var<Scalar> h_g) {
  GoalFeatures<Scalar> out;
  out.features.push_back(relu(feature_head(ctx, h_g)));
  out.times.push_back(rho_);
  return out;
}

template <typename Scalar>
Var<Scalar> LongTermGoal<Scalar>::project_goals(const Context<Scalar>& ctx, const GoalFeatures<Scalar>& features) {
  return goal_head(ctx, features.features.at(0));
}

template <typename Scalar>
void LongTermGoal<Scalar>::collect(StateRefs<Scalar>& refs) {
  feature_head.collect(refs);
  goal_head.collect(refs);
}

template class GoalEvaluator<float>;
template class GoalEvaluator<double>;
template class LongTermGoal<float>;
template class LongTermGoal<double>;

}  // namespace mgnet
