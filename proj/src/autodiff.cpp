#include "mgnet/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "mgnet/attention.hpp"

namespace mgnet {

template <typename Scalar>
Var<Scalar> Tape<Scalar>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<Scalar>(this, static_cast<Index>(nodes_.size()) - 1);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::variable(Mat value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::parameter(Parameter<Scalar>& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var<Scalar>(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  Var<Scalar> v = push(std::move(n));
  param_ids_.emplace(&p, v.id());
  return v;
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Mat value, std::initializer_list<Var<Scalar>> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Mat value, const std::vector<Var<Scalar>>& parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename Scalar>
void Tape<Scalar>::backward(Var<Scalar> root) {
  if (root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
  if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward: root must be a 1x1 value");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Mat::Ones(1, 1);
  for (Index i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

template <typename Scalar>
void Tape<Scalar>::clear() {
  nodes_.clear();
  param_ids_.clear();
}

template class Tape<float>;
template class Tape<double>;

namespace {

template <typename Scalar>
void check_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix<Scalar> out = a.value() * b.value();
  const Index ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& t, Index self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  check_same_shape(a, b, "add");
  const Index ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
  check_same_shape(a, b, "sub");
  const Index ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> hadamard(Var<Scalar> a, Var<Scalar> b) {
  check_same_shape(a, b, "hadamard");
  const Index ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& t, Index self) {
    if (t.requires_grad(ia)) t.accumulate(ia, t.grad(self).cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, t.grad(self).cwiseProduct(t.value(ia)));
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  const Index ia = a.id();
  return a.tape()->record(a.value() * s, {a},
                          [ia, s](Tape<Scalar>& t, Index self) { t.accumulate(ia, t.grad(self) * s); });
}

template <typename Scalar>
Var<Scalar> add_bias(Var<Scalar> a, Var<Scalar> bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw std::invalid_argument("add_bias: bias must be 1 x cols");
  const Index ia = a.id(), ib = bias.id();
  Matrix<Scalar> out = a.value().rowwise() + bias.value().row(0);
  return a.tape()->record(std::move(out), {a, bias}, [ia, ib](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self));
    if (t.requires_grad(ib)) t.accumulate(ib, t.grad(self).colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> affine(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b) {
  if (x.cols() != w.rows()) throw std::invalid_argument("affine: input width does not match weight rows");
  if (b.rows() != 1 || b.cols() != w.cols()) throw std::invalid_argument("affine: bias must be 1 x out");
  Matrix<Scalar> out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  const Index ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record(std::move(out), {x, w, b}, [ix, iw, ib](Tape<Scalar>& t, Index self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ix)) t.accumulate(ix, g * t.value(iw).transpose());
    if (t.requires_grad(iw)) t.accumulate(iw, t.value(ix).transpose() * g);
    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Matrix<Scalar> out = (Scalar(1) + (-a.value().array()).exp()).inverse().matrix();
  const Index ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    const auto& y = t.value(self).array();
    t.accumulate(ia, (t.grad(self).array() * y * (Scalar(1) - y)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  const Index ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    const auto& y = t.value(self).array();
    t.accumulate(ia, (t.grad(self).array() * (Scalar(1) - y.square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  const Index ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, (t.value(ia).array() > Scalar(0)).select(t.grad(self), Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().exp().matrix();
  const Index ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

template <typename Scalar>
Var<Scalar> log(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().log().matrix();
  const Index ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
  });
}

template <typename Scalar>
Var<Scalar> square(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().square().matrix();
  const Index ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, (Scalar(2) * t.grad(self).array() * t.value(ia).array()).matrix());
  });
}

template <typename Scalar>
Var<Scalar> clamp_min(Var<Scalar> a, Scalar floor) {
  Matrix<Scalar> out = a.value().cwiseMax(floor);
  const Index ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, floor](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, (t.value(ia).array() > floor).select(t.grad(self), Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const Index ia = a.id(), r = a.rows(), c = a.cols();
  return a.tape()->record(std::move(out), {a}, [ia, r, c](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, Matrix<Scalar>::Constant(r, c, t.grad(self)(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  const auto n = static_cast<Scalar>(a.value().size());
  return scale(sum(a), Scalar(1) / n);
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<Index, Index>> spans;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    spans.emplace_back(p.id(), offset);
    offset += p.cols();
  }
  return parts.front().tape()->record(std::move(out), parts, [spans](Tape<Scalar>& t, Index self) {
    const auto& g = t.grad(self);
    for (const auto& [id, off] : spans)
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(off, t.value(id).cols()));
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<Index, Index>> spans;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    spans.emplace_back(p.id(), offset);
    offset += p.rows();
  }
  return parts.front().tape()->record(std::move(out), parts, [spans](Tape<Scalar>& t, Index self) {
    const auto& g = t.grad(self);
    for (const auto& [id, off] : spans)
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(off, t.value(id).rows()));
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols: out of range");
  const Index ia = a.id(), r = a.rows(), c = a.cols();
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [ia, r, c, start, count](Tape<Scalar>& t, Index self) {
                            Matrix<Scalar> g = Matrix<Scalar>::Zero(r, c);
                            g.middleCols(start, count) = t.grad(self);
                            t.accumulate(ia, g);
                          });
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows: out of range");
  const Index ia = a.id(), r = a.rows(), c = a.cols();
  return a.tape()->record(a.value().middleRows(start, count), {a},
                          [ia, r, c, start, count](Tape<Scalar>& t, Index self) {
                            Matrix<Scalar> g = Matrix<Scalar>::Zero(r, c);
                            g.middleRows(start, count) = t.grad(self);
                            t.accumulate(ia, g);
                          });
}

template <typename Scalar>
Var<Scalar> dropout(Var<Scalar> a, Scalar rate, std::mt19937_64& rng) {
  if (rate <= Scalar(0)) return a;
  if (rate >= Scalar(1)) throw std::invalid_argument("dropout: rate must be below 1");
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const Scalar kept_scale = Scalar(1) / (Scalar(1) - rate);
  Matrix<Scalar> mask(a.rows(), a.cols());
  for (Index j = 0; j < mask.cols(); ++j)
    for (Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(rng) ? kept_scale : Scalar(0);
  Matrix<Scalar> out = a.value().cwiseProduct(mask);
  const Index ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, mask = std::move(mask)](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(mask));
  });
}

template <typename Scalar>
Var<Scalar> gru_cell(Var<Scalar> input_gates, Var<Scalar> hidden, Var<Scalar> w_hh, Var<Scalar> b_hh) {
  const Index batch = hidden.rows();
  const Index h = hidden.cols();
  if (w_hh.rows() != h || w_hh.cols() != 3 * h) throw std::invalid_argument("gru_cell: w_hh must be H x 3H");
  if (b_hh.rows() != 1 || b_hh.cols() != 3 * h) throw std::invalid_argument("gru_cell: b_hh must be 1 x 3H");
  if (input_gates.rows() != batch || input_gates.cols() != 3 * h)
    throw std::invalid_argument("gru_cell: input gates must be B x 3H");

  Matrix<Scalar> gh = hidden.value() * w_hh.value();
  gh.rowwise() += b_hh.value().row(0);
  const auto& gi = input_gates.value();

  Matrix<Scalar> r = (gi.leftCols(h) + gh.leftCols(h)).array().logistic().matrix();
  Matrix<Scalar> z = (gi.middleCols(h, h) + gh.middleCols(h, h)).array().logistic().matrix();
  Matrix<Scalar> gh_n = gh.rightCols(h);
  Matrix<Scalar> n = (gi.rightCols(h).array() + r.array() * gh_n.array()).tanh().matrix();
  Matrix<Scalar> out = ((Scalar(1) - z.array()) * n.array() + z.array() * hidden.value().array()).matrix();

  const Index igi = input_gates.id(), ih = hidden.id(), iw = w_hh.id(), ib = b_hh.id();
  return hidden.tape()->record(
      std::move(out), {input_gates, hidden, w_hh, b_hh},
      [=, r = std::move(r), z = std::move(z), n = std::move(n), gh_n = std::move(gh_n)](Tape<Scalar>& t,
                                                                                        Index self) {
        const auto& dh = t.grad(self).array();
        const auto& hprev = t.value(ih).array();
        Matrix<Scalar> dgh(batch, 3 * h);
        Matrix<Scalar> dgi(batch, 3 * h);
        auto dpre_n = (dh * (Scalar(1) - z.array()) * (Scalar(1) - n.array().square())).eval();
        auto dpre_z = (dh * (hprev - n.array()) * z.array() * (Scalar(1) - z.array())).eval();
        auto dpre_r = (dpre_n * gh_n.array() * r.array() * (Scalar(1) - r.array())).eval();
        dgi.leftCols(h) = dpre_r.matrix();
        dgi.middleCols(h, h) = dpre_z.matrix();
        dgi.rightCols(h) = dpre_n.matrix();
        dgh.leftCols(h) = dpre_r.matrix();
        dgh.middleCols(h, h) = dpre_z.matrix();
        dgh.rightCols(h) = (dpre_n * r.array()).matrix();
        t.accumulate(igi, dgi);
        if (t.requires_grad(ih)) {
          Matrix<Scalar> dprev = (dh * z.array()).matrix();
          dprev.noalias() += dgh * t.value(iw).transpose();
          t.accumulate(ih, dprev);
        }
        if (t.requires_grad(iw)) t.accumulate(iw, t.value(ih).transpose() * dgh);
        if (t.requires_grad(ib)) t.accumulate(ib, dgh.colwise().sum());
      });
}

template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps) {
  const Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw std::invalid_argument("layer_norm: gain/shift must be 1 x width");
  const auto& xv = x.value();
  Vector<Scalar> mu = xv.rowwise().mean();
  Matrix<Scalar> centered = xv.colwise() - mu;
  Vector<Scalar> inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<Scalar>(d)) + eps).rsqrt().matrix();
  Matrix<Scalar> xhat = centered.array().colwise() * inv_std.array();
  Matrix<Scalar> out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  const Index ix = x.id(), ig = gamma.id(), ibt = beta.id();
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ibt, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& t, Index self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(ibt)) t.accumulate(ibt, g.colwise().sum());
        if (t.requires_grad(ix)) {
          Matrix<Scalar> dxhat = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
          Vector<Scalar> m1 = dxhat.rowwise().mean();
          Vector<Scalar> m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix<Scalar> dx = dxhat.colwise() - m1;
          dx -= (xhat.array().colwise() * m2.array()).matrix();
          dx = (dx.array().colwise() * inv_std.array()).matrix();
          t.accumulate(ix, dx);
        }
        (void)d;
      });
}

template <typename Scalar>
Var<Scalar> batch_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps,
                       RowVector<Scalar>* batch_mean, RowVector<Scalar>* batch_var) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw std::invalid_argument("batch_norm: gain/shift must be 1 x width");
  const auto& xv = x.value();
  RowVector<Scalar> mu = xv.colwise().mean();
  Matrix<Scalar> centered = xv.rowwise() - mu;
  RowVector<Scalar> var = centered.array().square().colwise().sum() / static_cast<Scalar>(n);
  RowVector<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<Scalar> xhat = centered.array().rowwise() * inv_std.array();
  Matrix<Scalar> out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  const Index ix = x.id(), ig = gamma.id(), ibt = beta.id();
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ibt, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& t, Index self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(ibt)) t.accumulate(ibt, g.colwise().sum());
        if (t.requires_grad(ix)) {
          Matrix<Scalar> dxhat = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
          RowVector<Scalar> m1 = dxhat.colwise().mean();
          RowVector<Scalar> m2 = dxhat.cwiseProduct(xhat).colwise().mean();
          Matrix<Scalar> dx = dxhat.rowwise() - m1;
          dx -= (xhat.array().rowwise() * m2.array()).matrix();
          dx = (dx.array().rowwise() * inv_std.array()).matrix();
          t.accumulate(ix, dx);
        }
      });
}

template <typename Scalar>
Var<Scalar> batch_norm_frozen(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, const RowVector<Scalar>& mean,
                              const RowVector<Scalar>& var, Scalar eps) {
  const Index d = x.cols();
  if (gamma.cols() != d || beta.cols() != d || mean.cols() != d || var.cols() != d)
    throw std::invalid_argument("batch_norm_frozen: width mismatch");
  RowVector<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<Scalar> xhat = (x.value().rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix<Scalar> out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  const Index ix = x.id(), ig = gamma.id(), ibt = beta.id();
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ibt, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& t, Index self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(ibt)) t.accumulate(ibt, g.colwise().sum());
        if (t.requires_grad(ix))
          t.accumulate(ix, (g.array().rowwise() * (t.value(ig).row(0).array() * inv_std.array())).matrix());
      });
}

template <typename Scalar>
Var<Scalar> multi_head_attention_core(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, Index steps, Index batch,
                                      Index heads) {
  const Index width = q.cols();
  if (q.rows() != steps * batch || k.rows() != q.rows() || v.rows() != q.rows())
    throw std::invalid_argument("attention: rows must equal steps * batch");
  if (k.cols() != width || v.cols() != width) throw std::invalid_argument("attention: width mismatch");
  if (heads < 1 || width % heads != 0) throw std::invalid_argument("attention: width not divisible by heads");
  const Index dk = width / heads;
  const Index total_rows = steps * batch;
  using Strided = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
  using ConstBlock = Eigen::Map<const Matrix<Scalar>, 0, Strided>;
  using Block = Eigen::Map<Matrix<Scalar>, 0, Strided>;
  const Strided stride(total_rows, batch);

  // One T x T weight matrix per (sample, head).
  std::vector<Matrix<Scalar>> weights(static_cast<std::size_t>(batch * heads));
  Matrix<Scalar> out(total_rows, width);
  for (Index b = 0; b < batch; ++b) {
    for (Index hd = 0; hd < heads; ++hd) {
      const Index offset = b + hd * dk * total_rows;
      ConstBlock qb(q.value().data() + offset, steps, dk, stride);
      ConstBlock kb(k.value().data() + offset, steps, dk, stride);
      ConstBlock vb(v.value().data() + offset, steps, dk, stride);
      Matrix<Scalar>& a = weights[static_cast<std::size_t>(b * heads + hd)];
      a = attention_weights(qb, kb);
      Block ob(out.data() + offset, steps, dk, stride);
      ob.noalias() = a * vb;
    }
  }

  const Index iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape()->record(
      std::move(out), {q, k, v}, [=, weights = std::move(weights)](Tape<Scalar>& t, Index self) {
        const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dk));
        Matrix<Scalar> dq = Matrix<Scalar>::Zero(total_rows, width);
        Matrix<Scalar> dkm = Matrix<Scalar>::Zero(total_rows, width);
        Matrix<Scalar> dv = Matrix<Scalar>::Zero(total_rows, width);
        const Strided st(total_rows, batch);
        for (Index b = 0; b < batch; ++b) {
          for (Index hd = 0; hd < heads; ++hd) {
            const Index offset = b + hd * dk * total_rows;
            ConstBlock qb(t.value(iq).data() + offset, steps, dk, st);
            ConstBlock kb(t.value(ik).data() + offset, steps, dk, st);
            ConstBlock vb(t.value(iv).data() + offset, steps, dk, st);
            ConstBlock gb(t.grad(self).data() + offset, steps, dk, st);
            const Matrix<Scalar>& a = weights[static_cast<std::size_t>(b * heads + hd)];
            Block(dv.data() + offset, steps, dk, st).noalias() = a.transpose() * gb;
            Matrix<Scalar> da = gb * vb.transpose();
            Vector<Scalar> row_dot = da.cwiseProduct(a).rowwise().sum();
            Matrix<Scalar> ds = (a.array() * (da.colwise() - row_dot).array()).matrix() * inv_sqrt;
            Block(dq.data() + offset, steps, dk, st).noalias() = ds * kb;
            Block(dkm.data() + offset, steps, dk, st).noalias() = ds.transpose() * qb;
          }
        }
        t.accumulate(iq, dq);
        t.accumulate(ik, dkm);
        t.accumulate(iv, dv);
      });
}

#define MGNET_INSTANTIATE_OPS(S)                                                                              \
  template Var<S> matmul(Var<S>, Var<S>);                                                                     \
  template Var<S> operator+(Var<S>, Var<S>);                                                                  \
  template Var<S> operator-(Var<S>, Var<S>);                                                                  \
  template Var<S> hadamard(Var<S>, Var<S>);                                                                   \
  template Var<S> scale(Var<S>, S);                                                                           \
  template Var<S> add_bias(Var<S>, Var<S>);                                                                   \
  template Var<S> affine(Var<S>, Var<S>, Var<S>);                                                             \
  template Var<S> sigmoid(Var<S>);                                                                            \
  template Var<S> tanh(Var<S>);                                                                               \
  template Var<S> relu(Var<S>);                                                                               \
  template Var<S> exp(Var<S>);                                                                                \
  template Var<S> log(Var<S>);                                                                                \
  template Var<S> square(Var<S>);                                                                             \
  template Var<S> clamp_min(Var<S>, S);                                                                       \
  template Var<S> sum(Var<S>);                                                                                \
  template Var<S> mean(Var<S>);                                                                               \
  template Var<S> concat_cols(const std::vector<Var<S>>&);                                                    \
  template Var<S> concat_rows(const std::vector<Var<S>>&);                                                    \
  template Var<S> slice_cols(Var<S>, Index, Index);                                                           \
  template Var<S> slice_rows(Var<S>, Index, Index);                                                           \
  template Var<S> dropout(Var<S>, S, std::mt19937_64&);                                                       \
  template Var<S> gru_cell(Var<S>, Var<S>, Var<S>, Var<S>);                                                   \
  template Var<S> layer_norm(Var<S>, Var<S>, Var<S>, S);                                                      \
  template Var<S> batch_norm(Var<S>, Var<S>, Var<S>, S, RowVector<S>*, RowVector<S>*);                        \
  template Var<S> batch_norm_frozen(Var<S>, Var<S>, Var<S>, const RowVector<S>&, const RowVector<S>&, S);     \
  template Var<S> multi_head_attention_core(Var<S>, Var<S>, Var<S>, Index, Index, Index);

MGNET_INSTANTIATE_OPS(float)
MGNET_INSTANTIATE_OPS(double)

}  // namespace mgnet
