#include "mgnet/encoder.hpp"

#include <stdexcept>

namespace mgnet {

template <typename Scalar>
std::vector<Var<Scalar>> split_steps(Var<Scalar> flat, Index width) {
  if (width < 1 || flat.cols() % width != 0) throw std::invalid_argument("split_steps: width does not divide columns");
  std::vector<Var<Scalar>> steps;
  for (Index c = 0; c < flat.cols(); c += width) steps.push_back(slice_cols(flat, c, width));
  return steps;
}

template <typename Scalar>
GruEncoder<Scalar>::GruEncoder(const std::string& name, Index input_dim, Index hidden, std::mt19937_64& rng)
    : cell(name + ".gru", input_dim, hidden, rng) {}

template <typename Scalar>
Var<Scalar> GruEncoder<Scalar>::operator()(const Context<Scalar>& ctx, const std::vector<Var<Scalar>>& steps) {
  if (steps.empty()) throw std::invalid_argument("gru encoder: sequence must have at least one step");
  const Index batch = steps.front().rows();
  Var<Scalar> h = ctx.tape.constant(Matrix<Scalar>::Zero(batch, cell.hidden_size()));
  for (const auto& x : steps) h = cell(ctx, x, h);
  return h;
}

template std::vector<Var<float>> split_steps(Var<float>, Index);
template std::vector<Var<double>> split_steps(Var<double>, Index);
template class GruEncoder<float>;
template class GruEncoder<double>;

}  // namespace mgnet
