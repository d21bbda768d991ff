#pragma once

#include <functional>
#include <initializer_list>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgnet/tensor.hpp"

namespace mgnet {

/// A learnable tensor. Gradients accumulate into `grad` when a tape that
/// references the parameter is back-propagated.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

/// Handle to a node recorded on a Tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, Index id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  const Matrix<Scalar>& grad() const { return tape_->grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape<Scalar>* tape() const { return tape_; }
  Index id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  Index id_ = -1;
};

/// Reverse-mode recording of a computation over batch-major matrices.
///
/// Every operation appends a node holding its value and, when any input
/// needs a gradient, a closure that pushes the node's gradient to its
/// inputs. Parameters are recorded once per tape and their gradients are
/// flushed into `Parameter::grad` by backward().
template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&, Index)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Mat value);
  Var<Scalar> variable(Mat value);
  Var<Scalar> parameter(Parameter<Scalar>& p);

  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> parents, Backward backward);
  Var<Scalar> record(Mat value, const std::vector<Var<Scalar>>& parents, Backward backward);

  const Mat& value(Index id) const { return nodes_[id].value; }
  const Mat& grad(Index id) const { return nodes_[id].grad; }
  bool requires_grad(Index id) const { return nodes_[id].requires_grad; }

  template <typename Derived>
  void accumulate(Index id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Seeds d(root)/d(root) = 1 and propagates. Node gradients from a previous
  /// call are discarded first; parameter gradients keep accumulating.
  void backward(Var<Scalar> root);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter<Scalar>* param = nullptr;
    Backward backward;
  };

  Var<Scalar> push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, Index> param_ids_;
};

// Elementwise and linear-algebra operations. Shapes follow Eigen rules;
// `add_bias` broadcasts a 1 x n row over every row of the left operand.

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> hadamard(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s);
template <typename Scalar>
Var<Scalar> add_bias(Var<Scalar> a, Var<Scalar> bias);
/// x * W + b
template <typename Scalar>
Var<Scalar> affine(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a);
template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a);
template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a);
template <typename Scalar>
Var<Scalar> exp(Var<Scalar> a);
template <typename Scalar>
Var<Scalar> log(Var<Scalar> a);
template <typename Scalar>
Var<Scalar> square(Var<Scalar> a);
/// max(a, floor); the gradient is zero where the floor is active.
template <typename Scalar>
Var<Scalar> clamp_min(Var<Scalar> a, Scalar floor);

/// 1 x 1 reductions.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a);
template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a);

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts);
template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts);
template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Index start, Index count);
template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Index start, Index count);

/// Inverted dropout: kept entries are scaled by 1 / (1 - rate).
template <typename Scalar>
Var<Scalar> dropout(Var<Scalar> a, Scalar rate, std::mt19937_64& rng);

/// One gated-recurrent update. `input_gates` is x * W_ih + b_ih (B x 3H, gate
/// order reset, update, candidate); the hidden-side projection is applied here.
template <typename Scalar>
Var<Scalar> gru_cell(Var<Scalar> input_gates, Var<Scalar> hidden, Var<Scalar> w_hh, Var<Scalar> b_hh);

/// Row-wise normalization with learned gain and shift.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps);

/// Column-wise normalization with batch statistics. Writes the biased batch
/// mean and variance to `batch_mean` / `batch_var` for running averages.
template <typename Scalar>
Var<Scalar> batch_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps,
                       RowVector<Scalar>* batch_mean, RowVector<Scalar>* batch_var);

/// Column-wise normalization with frozen statistics.
template <typename Scalar>
Var<Scalar> batch_norm_frozen(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, const RowVector<Scalar>& mean,
                              const RowVector<Scalar>& var, Scalar eps);

/// Multi-head scaled dot-product attention over sequences stored time-major:
/// row t * batch + b holds step t of sample b. Q, K and V are
/// (steps * batch) x width and the output has the same shape, with head h
/// occupying columns [h * width / heads, (h + 1) * width / heads).
template <typename Scalar>
Var<Scalar> multi_head_attention_core(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, Index steps, Index batch,
                                      Index heads);

}  // namespace mgnet
