#pragma once

#include <cmath>
#include <vector>

#include "mgnet/layers.hpp"

namespace mgnet {

struct AttentionConfig {
  Index embed_dim = 32;
  Index num_heads = 8;
  Index num_layers = 1;
  Index ff_multiplier = 4;
  Index output_dim = 256;
  bool positional = true;

  Index head_dim() const { return embed_dim / num_heads; }
  void validate() const;
};

/// softmax(Q K^T / sqrt(d_k)), one probability row per query.
template <typename DerivedQ, typename DerivedK>
Matrix<typename DerivedQ::Scalar> attention_weights(const Eigen::MatrixBase<DerivedQ>& q,
                                                    const Eigen::MatrixBase<DerivedK>& k) {
  using Scalar = typename DerivedQ::Scalar;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(k.cols()));
  Matrix<Scalar> s = (q * k.transpose()) * inv_sqrt;
  for (Index i = 0; i < s.rows(); ++i) {
    const Scalar m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp().matrix();
    s.row(i) /= s.row(i).sum();
  }
  return s;
}

/// softmax(Q K^T / sqrt(d_k)) V for a single sequence.
template <typename DerivedQ, typename DerivedK, typename DerivedV>
Matrix<typename DerivedQ::Scalar> scaled_dot_attention(const Eigen::MatrixBase<DerivedQ>& q,
                                                       const Eigen::MatrixBase<DerivedK>& k,
                                                       const Eigen::MatrixBase<DerivedV>& v) {
  return attention_weights(q, k) * v;
}

/// Sinusoidal position table: even columns sin(t / 10000^(i/d)), odd columns cos.
Matrix<double> sinusoidal_encoding(Index steps, Index width);

/// Q/K/V projections, per-head attention and the merging output layer f_O.
template <typename Scalar>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, Index width, Index heads, std::mt19937_64& rng);

  /// `x` is time-major: row t * batch + b.
  Var<Scalar> operator()(const Context<Scalar>& ctx, Var<Scalar> x, Index steps, Index batch);
  void collect(StateRefs<Scalar>& refs);

  Index heads() const { return heads_; }

  Linear<Scalar> query, key, value, output;

 private:
  Index heads_ = 1;
};

/// Transformer-style temporal encoder producing the pooled feature h_A.
template <typename Scalar>
class AttentionEncoder {
 public:
  struct Layer {
    MultiHeadAttention<Scalar> attention;
    LayerNorm<Scalar> norm1;
    Linear<Scalar> ff1, ff2;
    LayerNorm<Scalar> norm2;
  };

  AttentionEncoder() = default;
  AttentionEncoder(const std::string& name, const AttentionConfig& config, Index input_dim, std::mt19937_64& rng);

  /// Linear embedding of every step plus the positional table.
  Var<Scalar> embed(const Context<Scalar>& ctx, Var<Scalar> sequence, Index steps, Index batch);
  /// Embedding followed by the encoder layers; time-major (steps * batch) x embed_dim.
  Var<Scalar> encode_sequence(const Context<Scalar>& ctx, Var<Scalar> sequence, Index steps, Index batch);
  /// `steps` holds one batch x input_dim matrix per observed step.
  Var<Scalar> operator()(const Context<Scalar>& ctx, const std::vector<Var<Scalar>>& steps);

  void collect(StateRefs<Scalar>& refs);
  const AttentionConfig& config() const { return config_; }
  AttentionConfig& mutable_config() { return config_; }

  Linear<Scalar> embedding;
  std::vector<Layer> layers;
  Linear<Scalar> head;

 private:
  AttentionConfig config_;
  std::string name_;
};

}  // namespace mgnet
