#include "mgnet/decoder.hpp"

#include <stdexcept>

namespace mgnet {

template <typename Scalar>
Decoder<Scalar>::Decoder(const std::string& name, Index init_dim, Index goal_feature_dim, const DecoderConfig& config,
                         std::mt19937_64& rng)
    : init_projection(name + ".init_projection", init_dim, config.hidden_dim, rng),
      box_embedding(name + ".box_embedding", 4, config.box_embed_dim, rng),
      cell(name + ".gru", config.box_embed_dim + goal_feature_dim, config.hidden_dim, rng),
      output_head(name + ".output_head", config.hidden_dim, 4, rng),
      config_(config) {
  if (config.rho < 1) throw std::invalid_argument("decoder: horizon must be at least 1 step");
  // Start from zero deltas, i.e. the last observed box held still.
  output_head.weight.value.setZero();
  output_head.bias.value.setZero();
}

template <typename Scalar>
DecoderState<Scalar> Decoder<Scalar>::init(const Context<Scalar>& ctx, Var<Scalar> h_x, std::optional<Var<Scalar>> h_a,
                                           Var<Scalar> z) {
  std::vector<Var<Scalar>> parts{h_x};
  if (h_a) parts.push_back(*h_a);
  parts.push_back(z);
  DecoderState<Scalar> s;
  s.hidden = init_projection(ctx, concat_cols(parts));
  s.box = ctx.tape.constant(Matrix<Scalar>::Zero(h_x.rows(), 4));
  s.step = 1;
  return s;
}

template <typename Scalar>
std::pair<DecoderState<Scalar>, Var<Scalar>> Decoder<Scalar>::step(const Context<Scalar>& ctx,
                                                                   const DecoderState<Scalar>& state,
                                                                   Var<Scalar> goal_feature) {
  if (state.step < 1 || state.step > config_.rho)
    throw std::out_of_range("decoder: step " + std::to_string(state.step) + " outside [1, " +
                            std::to_string(config_.rho) + "]");
  Var<Scalar> embedded = relu(box_embedding(ctx, state.box));
  Var<Scalar> input = concat_cols<Scalar>({embedded, goal_feature});
  DecoderState<Scalar> next;
  next.hidden = cell(ctx, input, state.hidden);
  Var<Scalar> delta = output_head(ctx, next.hidden);
  next.box = state.box + delta;
  next.step = state.step + 1;
  return {next, delta};
}

template <typename Scalar>
Var<Scalar> Decoder<Scalar>::operator()(const Context<Scalar>& ctx, Var<Scalar> h_x, std::optional<Var<Scalar>> h_a,
                                        Var<Scalar> z, const GoalFeatures<Scalar>& goals) {
  if (goals.features.empty() || goals.features.size() != goals.times.size())
    throw std::invalid_argument("decoder: goal features and times must be non-empty and aligned");
  if (goals.times.back() != config_.rho) throw std::invalid_argument("decoder: last goal time must equal the horizon");
  DecoderState<Scalar> state = init(ctx, h_x, h_a, z);
  std::vector<Var<Scalar>> boxes;
  for (Index s = 1; s <= config_.rho; ++s) {
    const Index j = covering_index(s, goals.times);
    auto [next, delta] = step(ctx, state, goals.features[static_cast<std::size_t>(j)]);
    state = next;
    boxes.push_back(state.box);
  }
  return concat_cols(boxes);
}

template <typename Scalar>
void Decoder<Scalar>::collect(StateRefs<Scalar>& refs) {
  init_projection.collect(refs);
  box_embedding.collect(refs);
  cell.collect(refs);
  output_head.collect(refs);
}

template class Decoder<float>;
template class Decoder<double>;

}  // namespace mgnet
