#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mgnet/autodiff.hpp"

namespace mgnet {

/// Per-forward settings shared by every layer.
template <typename Scalar>
struct Context {
  Tape<Scalar>& tape;
  bool training = false;
  std::mt19937_64* rng = nullptr;
  Scalar dropout = Scalar(0);
};

template <typename Scalar>
Var<Scalar> maybe_dropout(const Context<Scalar>& ctx, Var<Scalar> x);

template <typename Scalar>
class BatchNorm;

/// Learnable tensors plus non-learnable running statistics, addressed by name.
template <typename Scalar>
struct StateRefs {
  std::vector<Parameter<Scalar>*> params;
  std::vector<std::pair<std::string, Matrix<Scalar>*>> buffers;
  std::vector<BatchNorm<Scalar>*> batch_norms;
};

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, Index in, Index out, std::mt19937_64& rng);

  Var<Scalar> operator()(const Context<Scalar>& ctx, Var<Scalar> x);
  void collect(StateRefs<Scalar>& refs);

  Index in_features() const { return weight.value.rows(); }
  Index out_features() const { return weight.value.cols(); }

  Parameter<Scalar> weight;  // in x out
  Parameter<Scalar> bias;    // 1 x out
};

/// Gated recurrent unit with PyTorch gate layout (reset, update, candidate).
template <typename Scalar>
class GruCell {
 public:
  GruCell() = default;
  GruCell(std::string name, Index input, Index hidden, std::mt19937_64& rng);

  /// x * W_ih + b_ih; separate so a constant input can be projected once.
  Var<Scalar> input_gates(const Context<Scalar>& ctx, Var<Scalar> x);
  Var<Scalar> step(const Context<Scalar>& ctx, Var<Scalar> gates, Var<Scalar> hidden);
  Var<Scalar> operator()(const Context<Scalar>& ctx, Var<Scalar> x, Var<Scalar> hidden) {
    return step(ctx, input_gates(ctx, x), hidden);
  }
  void collect(StateRefs<Scalar>& refs);

  Index input_size() const { return w_ih.value.rows(); }
  Index hidden_size() const { return w_hh.value.rows(); }

  Parameter<Scalar> w_ih;  // input x 3H
  Parameter<Scalar> w_hh;  // H x 3H
  Parameter<Scalar> b_ih;  // 1 x 3H
  Parameter<Scalar> b_hh;  // 1 x 3H
};

template <typename Scalar>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, Index width);

  Var<Scalar> operator()(const Context<Scalar>& ctx, Var<Scalar> x);
  void collect(StateRefs<Scalar>& refs);

  Parameter<Scalar> gamma;
  Parameter<Scalar> beta;
  Matrix<Scalar> running_mean;
  Matrix<Scalar> running_var;
  std::string name;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);
};

template <typename Scalar>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, Index width);

  Var<Scalar> operator()(const Context<Scalar>& ctx, Var<Scalar> x);
  void collect(StateRefs<Scalar>& refs);

  Parameter<Scalar> gamma;
  Parameter<Scalar> beta;
  Scalar eps = Scalar(1e-5);
};

/// Three affine layers with rectifiers between them and optional batch
/// normalization on the two hidden layers. No activation on the output.
template <typename Scalar>
class Mlp3 {
 public:
  Mlp3() = default;
  Mlp3(const std::string& name, Index in, Index hidden, Index out, bool batch_norm, std::mt19937_64& rng);

  Var<Scalar> operator()(const Context<Scalar>& ctx, Var<Scalar> x);
  void collect(StateRefs<Scalar>& refs);

  std::vector<const Linear<Scalar>*> affine_layers() const { return {&l1, &l2, &l3}; }
  bool uses_batch_norm() const { return use_bn_; }

  Linear<Scalar> l1, l2, l3;
  BatchNorm<Scalar> bn1, bn2;

 private:
  bool use_bn_ = false;
};

}  // namespace mgnet
