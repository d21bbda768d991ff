#include "mgnet/attention.hpp"

#include <stdexcept>
#include <string>

namespace mgnet {

void AttentionConfig::validate() const {
  if (embed_dim < 1 || num_heads < 1 || embed_dim % num_heads != 0)
    throw std::invalid_argument("attention: embed_dim must be a positive multiple of num_heads");
  if (num_layers < 1) throw std::invalid_argument("attention: num_layers must be at least 1");
  if (ff_multiplier < 1 || output_dim < 1) throw std::invalid_argument("attention: invalid widths");
}

Matrix<double> sinusoidal_encoding(Index steps, Index width) {
  Matrix<double> pe(steps, width);
  for (Index t = 0; t < steps; ++t) {
    for (Index i = 0; i < width; ++i) {
      const double exponent = static_cast<double>(i - i % 2) / static_cast<double>(width);
      const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
      pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

template <typename Scalar>
MultiHeadAttention<Scalar>::MultiHeadAttention(const std::string& name, Index width, Index heads,
                                               std::mt19937_64& rng)
    : query(name + ".query", width, width, rng),
      key(name + ".key", width, width, rng),
      value(name + ".value", width, width, rng),
      output(name + ".output", width, width, rng),
      heads_(heads) {
  if (heads < 1 || width % heads != 0) throw std::invalid_argument("attention: width not divisible by heads");
}

template <typename Scalar>
Var<Scalar> MultiHeadAttention<Scalar>::operator()(const Context<Scalar>& ctx, Var<Scalar> x, Index steps,
                                                   Index batch) {
  Var<Scalar> q = query(ctx, x);
  Var<Scalar> k = key(ctx, x);
  Var<Scalar> v = value(ctx, x);
  Var<Scalar> merged = multi_head_attention_core(q, k, v, steps, batch, heads_);
  return output(ctx, merged);
}

template <typename Scalar>
void MultiHeadAttention<Scalar>::collect(StateRefs<Scalar>& refs) {
  query.collect(refs);
  key.collect(refs);
  value.collect(refs);
  output.collect(refs);
}

template <typename Scalar>
AttentionEncoder<Scalar>::AttentionEncoder(const std::string& name, const AttentionConfig& config, Index input_dim,
                                           std::mt19937_64& rng)
    : config_(config), name_(name) {
  config_.validate();
  embedding = Linear<Scalar>(name + ".embedding", input_dim, config.embed_dim, rng);
  for (Index i = 0; i < config.num_layers; ++i) {
    const std::string prefix = name + ".layer" + std::to_string(i);
    Layer layer;
    layer.attention = MultiHeadAttention<Scalar>(prefix + ".attention", config.embed_dim, config.num_heads, rng);
    layer.norm1 = LayerNorm<Scalar>(prefix + ".norm1", config.embed_dim);
    layer.ff1 = Linear<Scalar>(prefix + ".ff1", config.embed_dim, config.embed_dim * config.ff_multiplier, rng);
    layer.ff2 = Linear<Scalar>(prefix + ".ff2", config.embed_dim * config.ff_multiplier, config.embed_dim, rng);
    layer.norm2 = LayerNorm<Scalar>(prefix + ".norm2", config.embed_dim);
    layers.push_back(std::move(layer));
  }
  head = Linear<Scalar>(name + ".head", config.embed_dim, config.output_dim, rng);
}

template <typename Scalar>
Var<Scalar> AttentionEncoder<Scalar>::embed(const Context<Scalar>& ctx, Var<Scalar> sequence, Index steps,
                                            Index batch) {
  if (steps < 1) throw std::invalid_argument("attention: sequence must have at least one step");
  if (!sequence.value().allFinite()) throw std::domain_error("attention: non-finite input");
  Var<Scalar> e = embedding(ctx, sequence);
  if (!config_.positional) return e;
  const Matrix<double> table = sinusoidal_encoding(steps, config_.embed_dim);
  Matrix<Scalar> pe(steps * batch, config_.embed_dim);
  for (Index t = 0; t < steps; ++t)
    for (Index b = 0; b < batch; ++b) pe.row(t * batch + b) = table.row(t).template cast<Scalar>();
  return e + ctx.tape.constant(std::move(pe));
}

template <typename Scalar>
Var<Scalar> AttentionEncoder<Scalar>::encode_sequence(const Context<Scalar>& ctx, Var<Scalar> sequence,
                                                      Index steps, Index batch) {
  Var<Scalar> x = embed(ctx, sequence, steps, batch);
  for (auto& layer : layers) {
    Var<Scalar> attended = maybe_dropout(ctx, layer.attention(ctx, x, steps, batch));
    x = layer.norm1(ctx, x + attended);
    Var<Scalar> ff = layer.ff2(ctx, relu(layer.ff1(ctx, x)));
    x = layer.norm2(ctx, x + maybe_dropout(ctx, ff));
  }
  return x;
}

template <typename Scalar>
Var<Scalar> AttentionEncoder<Scalar>::operator()(const Context<Scalar>& ctx, const std::vector<Var<Scalar>>& steps) {
  if (steps.empty()) throw std::invalid_argument("attention: sequence must have at least one step");
  const Index batch = steps.front().rows();
  const Index n = static_cast<Index>(steps.size());
  Var<Scalar> encoded = encode_sequence(ctx, concat_rows(steps), n, batch);
  Var<Scalar> last = slice_rows(encoded, (n - 1) * batch, batch);
  return maybe_dropout(ctx, head(ctx, last));
}

template <typename Scalar>
void AttentionEncoder<Scalar>::collect(StateRefs<Scalar>& refs) {
  embedding.collect(refs);
  for (auto& layer : layers) {
    layer.attention.collect(refs);
    layer.norm1.collect(refs);
    layer.ff1.collect(refs);
    layer.ff2.collect(refs);
    layer.norm2.collect(refs);
  }
  head.collect(refs);
}

template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;
template class AttentionEncoder<float>;
template class AttentionEncoder<double>;

}  // namespace mgnet
