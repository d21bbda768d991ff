#pragma once

#include <optional>
#include <string>

#include "mgnet/layers.hpp"

namespace mgnet {

inline constexpr double kSigmaFloor = 1e-6;

enum class LatentSource { recognition, prior, prior_mean };

const char* to_string(LatentSource source);

/// Diagonal Gaussian N(mu, diag(sigma^2)).
struct LatentDistribution {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;

  void validate() const;
};

struct LatentSample {
  Eigen::VectorXd z;
  LatentSource source = LatentSource::prior_mean;
};

/// z = mu + max(sigma, floor) * eps.
LatentSample reparameterize(const LatentDistribution& d, const Eigen::VectorXd& eps, LatentSource source);

/// Closed-form KL(q || p) for diagonal Gaussians, summed over dimensions.
double kl_divergence(const LatentDistribution& q, const LatentDistribution& p);

/// Batched latent head outputs on a tape: one row per sample.
template <typename Scalar>
struct LatentVars {
  Var<Scalar> mu;
  Var<Scalar> sigma;

  LatentDistribution row(Index i) const;
};

template <typename Scalar>
Var<Scalar> reparameterize(const LatentVars<Scalar>& d, Var<Scalar> eps);

/// Batch mean of the per-sample closed-form KL(q || p); a 1 x 1 value.
template <typename Scalar>
Var<Scalar> kl_divergence(const LatentVars<Scalar>& q, const LatentVars<Scalar>& p);

struct CvaeConfig {
  Index past_dim = 256;
  Index future_dim = 256;
  Index attention_dim = 256;  // 0 when the attention branch is absent
  Index latent_dim = 32;
  Index hidden_dim = 256;
  Index output_dim = 256;
  bool batch_norm = true;
};

/// Recognition, conditional prior and generation networks.
template <typename Scalar>
class Cvae {
 public:
  Cvae() = default;
  Cvae(const std::string& name, const CvaeConfig& config, std::mt19937_64& rng);

  /// Q(z | X, Y). Throws std::logic_error when the future encoding is absent.
  LatentVars<Scalar> recognition(const Context<Scalar>& ctx, Var<Scalar> h_x, std::optional<Var<Scalar>> h_y);
  /// P(z | X).
  LatentVars<Scalar> prior(const Context<Scalar>& ctx, Var<Scalar> h_x);
  /// h_G from (h_X, z, h_A); `h_a` must be present iff the attention branch was configured.
  Var<Scalar> generate(const Context<Scalar>& ctx, Var<Scalar> h_x, Var<Scalar> z, std::optional<Var<Scalar>> h_a);

  void collect(StateRefs<Scalar>& refs);
  const CvaeConfig& config() const { return config_; }

  Mlp3<Scalar> recognition_net;
  Mlp3<Scalar> prior_net;
  Mlp3<Scalar> generation_net;

 private:
  LatentVars<Scalar> split_head(Var<Scalar> out) const;
  CvaeConfig config_;
};

}  // namespace mgnet
