#include "mgnet/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace mgnet {

namespace {

template <typename Scalar>
Matrix<Scalar> uniform(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<Scalar> m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(dist(rng));
  return m;
}

}  // namespace

template <typename Scalar>
Var<Scalar> maybe_dropout(const Context<Scalar>& ctx, Var<Scalar> x) {
  if (!ctx.training || ctx.dropout <= Scalar(0)) return x;
  if (ctx.rng == nullptr) throw std::logic_error("dropout in training mode needs a random generator");
  return dropout(x, ctx.dropout, *ctx.rng);
}

template <typename Scalar>
Linear<Scalar>::Linear(std::string name, Index in, Index out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Parameter<Scalar>(name + ".weight", uniform<Scalar>(in, out, bound, rng));
  bias = Parameter<Scalar>(name + ".bias", uniform<Scalar>(1, out, bound, rng));
}

template <typename Scalar>
Var<Scalar> Linear<Scalar>::operator()(const Context<Scalar>& ctx, Var<Scalar> x) {
  return affine(x, ctx.tape.parameter(weight), ctx.tape.parameter(bias));
}

template <typename Scalar>
void Linear<Scalar>::collect(StateRefs<Scalar>& refs) {
  refs.params.push_back(&weight);
  refs.params.push_back(&bias);
}

template <typename Scalar>
GruCell<Scalar>::GruCell(std::string name, Index input, Index hidden, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_ih = Parameter<Scalar>(name + ".w_ih", uniform<Scalar>(input, 3 * hidden, bound, rng));
  w_hh = Parameter<Scalar>(name + ".w_hh", uniform<Scalar>(hidden, 3 * hidden, bound, rng));
  b_ih = Parameter<Scalar>(name + ".b_ih", uniform<Scalar>(1, 3 * hidden, bound, rng));
  b_hh = Parameter<Scalar>(name + ".b_hh", uniform<Scalar>(1, 3 * hidden, bound, rng));
}

template <typename Scalar>
Var<Scalar> GruCell<Scalar>::input_gates(const Context<Scalar>& ctx, Var<Scalar> x) {
  return affine(x, ctx.tape.parameter(w_ih), ctx.tape.parameter(b_ih));
}

template <typename Scalar>
Var<Scalar> GruCell<Scalar>::step(const Context<Scalar>& ctx, Var<Scalar> gates, Var<Scalar> hidden) {
  return gru_cell(gates, hidden, ctx.tape.parameter(w_hh), ctx.tape.parameter(b_hh));
}

template <typename Scalar>
void GruCell<Scalar>::collect(StateRefs<Scalar>& refs) {
  refs.params.insert(refs.params.end(), {&w_ih, &w_hh, &b_ih, &b_hh});
}

template <typename Scalar>
BatchNorm<Scalar>::BatchNorm(std::string n, Index width)
    : gamma(n + ".gamma", Matrix<Scalar>::Ones(1, width)),
      beta(n + ".beta", Matrix<Scalar>::Zero(1, width)),
      running_mean(Matrix<Scalar>::Zero(1, width)),
      running_var(Matrix<Scalar>::Ones(1, width)),
      name(std::move(n)) {}

template <typename Scalar>
Var<Scalar> BatchNorm<Scalar>::operator()(const Context<Scalar>& ctx, Var<Scalar> x) {
  auto g = ctx.tape.parameter(gamma);
  auto b = ctx.tape.parameter(beta);
  if (!ctx.training || x.rows() < 2) {
    return batch_norm_frozen(x, g, b, RowVector<Scalar>(running_mean.row(0)), RowVector<Scalar>(running_var.row(0)),
                             eps);
  }
  RowVector<Scalar> mu, var;
  Var<Scalar> out = batch_norm(x, g, b, eps, &mu, &var);
  const Scalar n = static_cast<Scalar>(x.rows());
  running_mean = (Scalar(1) - momentum) * running_mean + momentum * mu;
  running_var = (Scalar(1) - momentum) * running_var + momentum * (var * (n / (n - Scalar(1))));
  return out;
}

template <typename Scalar>
void BatchNorm<Scalar>::collect(StateRefs<Scalar>& refs) {
  refs.params.push_back(&gamma);
  refs.params.push_back(&beta);
  refs.buffers.emplace_back(name + ".running_mean", &running_mean);
  refs.buffers.emplace_back(name + ".running_var", &running_var);
  refs.batch_norms.push_back(this);
}

template <typename Scalar>
LayerNorm<Scalar>::LayerNorm(std::string name, Index width)
    : gamma(name + ".gamma", Matrix<Scalar>::Ones(1, width)), beta(name + ".beta", Matrix<Scalar>::Zero(1, width)) {}

template <typename Scalar>
Var<Scalar> LayerNorm<Scalar>::operator()(const Context<Scalar>& ctx, Var<Scalar> x) {
  return layer_norm(x, ctx.tape.parameter(gamma), ctx.tape.parameter(beta), eps);
}

template <typename Scalar>
void LayerNorm<Scalar>::collect(StateRefs<Scalar>& refs) {
  refs.params.push_back(&gamma);
  refs.params.push_back(&beta);
}

template <typename Scalar>
Mlp3<Scalar>::Mlp3(const std::string& name, Index in, Index hidden, Index out, bool batch_norm,
                   std::mt19937_64& rng)
    : l1(name + ".fc1", in, hidden, rng),
      l2(name + ".fc2", hidden, hidden, rng),
      l3(name + ".fc3", hidden, out, rng),
      use_bn_(batch_norm) {
  if (use_bn_) {
    bn1 = BatchNorm<Scalar>(name + ".bn1", hidden);
    bn2 = BatchNorm<Scalar>(name + ".bn2", hidden);
  }
}

template <typename Scalar>
Var<Scalar> Mlp3<Scalar>::operator()(const Context<Scalar>& ctx, Var<Scalar> x) {
  Var<Scalar> h = l1(ctx, x);
  if (use_bn_) h = bn1(ctx, h);
  h = relu(h);
  h = l2(ctx, h);
  if (use_bn_) h = bn2(ctx, h);
  h = relu(h);
  return l3(ctx, h);
}

template <typename Scalar>
void Mlp3<Scalar>::collect(StateRefs<Scalar>& refs) {
  l1.collect(refs);
  if (use_bn_) bn1.collect(refs);
  l2.collect(refs);
  if (use_bn_) bn2.collect(refs);
  l3.collect(refs);
}

template Var<float> maybe_dropout(const Context<float>&, Var<float>);
template Var<double> maybe_dropout(const Context<double>&, Var<double>);
template class Linear<float>;
template class Linear<double>;
template class GruCell<float>;
template class GruCell<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class Mlp3<float>;
template class Mlp3<double>;

}  // namespace mgnet
