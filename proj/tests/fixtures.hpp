#pragma once

#include <vector>

#include "mgnet/model.hpp"
#include "mgnet/trajectory_data.hpp"

namespace mgnet::test {

/// Narrow full model (attention and evaluator on) for fast tests.
inline ModelConfig tiny_model_config(Index tau = 4, Index rho = 6, Index k = 3) {
  ModelConfig cfg;
  cfg.tau = tau;
  cfg.rho = rho;
  cfg.k = k;
  cfg.hidden_dim = 12;
  cfg.latent_dim = 3;
  cfg.box_embed_dim = 4;
  cfg.attention_config.embed_dim = 8;
  cfg.attention_config.num_heads = 2;
  cfg.attention_config.output_dim = 12;
  return cfg;
}

/// Pixel windows cut from synthetic tracks.
inline std::vector<TrajectoryWindow> synthetic_windows(int n_tracks, int tau, int rho, Motion motion,
                                                       std::uint64_t seed, double noise = 0.0, int stride = 1) {
  SyntheticConfig sc;
  sc.n_tracks = n_tracks;
  sc.length = tau + rho + 10;
  sc.motion = motion;
  sc.noise_sigma = noise;
  sc.seed = seed;
  return window_tracks(generate_synthetic(sc), tau, rho, stride);
}

inline std::vector<TrajectoryWindow> normalized(const std::vector<TrajectoryWindow>& windows) {
  std::vector<TrajectoryWindow> out;
  for (const auto& w : windows) out.push_back(normalize_window(w, 1920.0, 1080.0));
  return out;
}

}  // namespace mgnet::test
