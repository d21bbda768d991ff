#pragma once

#include <optional>
#include <vector>

#include "mgnet/attention.hpp"

namespace mgnet {

/// Splits a batch x (steps * width) matrix into per-step batch x width slices.
template <typename Scalar>
std::vector<Var<Scalar>> split_steps(Var<Scalar> flat, Index width);

/// Gated-recurrent sequence encoder; returns the final hidden state.
template <typename Scalar>
class GruEncoder {
 public:
  GruEncoder() = default;
  GruEncoder(const std::string& name, Index input_dim, Index hidden, std::mt19937_64& rng);

  Var<Scalar> operator()(const Context<Scalar>& ctx, const std::vector<Var<Scalar>>& steps);
  void collect(StateRefs<Scalar>& refs) { cell.collect(refs); }

  GruCell<Scalar> cell;
};

template <typename Scalar>
struct EncodedFeatures {
  Var<Scalar> h_x;
  std::optional<Var<Scalar>> h_y;  // present only when the future was encoded
  std::optional<Var<Scalar>> h_a;  // present only when the attention branch exists
};

}  // namespace mgnet
