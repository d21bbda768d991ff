#include "mgnet/cvae.hpp"

#include <cmath>
#include <stdexcept>

namespace mgnet {

const char* to_string(LatentSource source) {
  switch (source) {
    case LatentSource::recognition:
      return "recognition";
    case LatentSource::prior:
      return "prior";
    case LatentSource::prior_mean:
      return "prior-mean";
  }
  return "unknown";
}

void LatentDistribution::validate() const {
  if (mu.size() != sigma.size()) throw std::invalid_argument("latent: mu and sigma sizes differ");
  if (!mu.allFinite() || !sigma.allFinite()) throw std::domain_error("latent: non-finite parameters");
  if ((sigma.array() <= 0.0).any()) throw std::domain_error("latent: sigma must be positive");
}

LatentSample reparameterize(const LatentDistribution& d, const Eigen::VectorXd& eps, LatentSource source) {
  if (eps.size() != d.mu.size()) throw std::invalid_argument("reparameterize: eps size differs from latent size");
  LatentSample s;
  s.z = d.mu + d.sigma.cwiseMax(kSigmaFloor).cwiseProduct(eps);
  s.source = source;
  return s;
}

double kl_divergence(const LatentDistribution& q, const LatentDistribution& p) {
  if (q.mu.size() != p.mu.size()) throw std::invalid_argument("kl_divergence: latent sizes differ");
  q.validate();
  p.validate();
  const auto sq = q.sigma.array();
  const auto sp = p.sigma.array();
  const auto dm = (q.mu - p.mu).array();
  return ((sp / sq).log() + (sq.square() + dm.square()) / (2.0 * sp.square()) - 0.5).sum();
}

template <typename Scalar>
LatentDistribution LatentVars<Scalar>::row(Index i) const {
  LatentDistribution d;
  d.mu = mu.value().row(i).transpose().template cast<double>();
  d.sigma = sigma.value().row(i).transpose().template cast<double>();
  return d;
}

template <typename Scalar>
Var<Scalar> reparameterize(const LatentVars<Scalar>& d, Var<Scalar> eps) {
  return d.mu + hadamard(d.sigma, eps);
}

template <typename Scalar>
Var<Scalar> kl_divergence(const LatentVars<Scalar>& q, const LatentVars<Scalar>& p) {
  const auto& mq = q.mu.value().array();
  const auto& sq = q.sigma.value().array();
  const auto& mp = p.mu.value().array();
  const auto& sp = p.sigma.value().array();
  if (q.mu.rows() != p.mu.rows() || q.mu.cols() != p.mu.cols())
    throw std::invalid_argument("kl_divergence: latent shapes differ");
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(q.mu.rows());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = ((sp / sq).log() + (sq.square() + (mq - mp).square()) / (Scalar(2) * sp.square()) - Scalar(0.5)).sum() *
              inv_batch;
  const Index imq = q.mu.id(), isq = q.sigma.id(), imp = p.mu.id(), isp = p.sigma.id();
  return q.mu.tape()->record(
      std::move(out), {q.mu, q.sigma, p.mu, p.sigma}, [=](Tape<Scalar>& t, Index self) {
        const Scalar g = t.grad(self)(0, 0) * inv_batch;
        const auto mqv = t.value(imq).array();
        const auto sqv = t.value(isq).array();
        const auto mpv = t.value(imp).array();
        const auto spv = t.value(isp).array();
        const auto diff = (mqv - mpv).eval();
        const auto inv_var_p = spv.square().inverse().eval();
        if (t.requires_grad(imq)) t.accumulate(imq, (g * diff * inv_var_p).matrix());
        if (t.requires_grad(imp)) t.accumulate(imp, (-g * diff * inv_var_p).matrix());
        if (t.requires_grad(isq)) t.accumulate(isq, (g * (sqv * inv_var_p - sqv.inverse())).matrix());
        if (t.requires_grad(isp))
          t.accumulate(isp, (g * (spv.inverse() - (sqv.square() + diff.square()) * inv_var_p / spv)).matrix());
      });
}

template <typename Scalar>
Cvae<Scalar>::Cvae(const std::string& name, const CvaeConfig& config, std::mt19937_64& rng) : config_(config) {
  recognition_net = Mlp3<Scalar>(name + ".recognition", config.past_dim + config.future_dim, config.hidden_dim,
                                 2 * config.latent_dim, config.batch_norm, rng);
  prior_net = Mlp3<Scalar>(name + ".prior", config.past_dim, config.hidden_dim, 2 * config.latent_dim,
                           config.batch_norm, rng);
  generation_net = Mlp3<Scalar>(name + ".generation", config.past_dim + config.latent_dim + config.attention_dim,
                                config.hidden_dim, config.output_dim, config.batch_norm, rng);
}

template <typename Scalar>
LatentVars<Scalar> Cvae<Scalar>::split_head(Var<Scalar> out) const {
  LatentVars<Scalar> d;
  d.mu = slice_cols(out, 0, config_.latent_dim);
  d.sigma = clamp_min(exp(slice_cols(out, config_.latent_dim, config_.latent_dim)), static_cast<Scalar>(kSigmaFloor));
  return d;
}

template <typename Scalar>
LatentVars<Scalar> Cvae<Scalar>::recognition(const Context<Scalar>& ctx, Var<Scalar> h_x,
                                             std::optional<Var<Scalar>> h_y) {
  if (!h_y) throw std::logic_error("recognition network needs the future encoding (training mode only)");
  return split_head(recognition_net(ctx, concat_cols<Scalar>({h_x, *h_y})));
}

template <typename Scalar>
LatentVars<Scalar> Cvae<Scalar>::prior(const Context<Scalar>& ctx, Var<Scalar> h_x) {
  return split_head(prior_net(ctx, h_x));
}

template <typename Scalar>
Var<Scalar> Cvae<Scalar>::generate(const Context<Scalar>& ctx, Var<Scalar> h_x, Var<Scalar> z,
                                   std::optional<Var<Scalar>> h_a) {
  if (h_a.has_value() != (config_.attention_dim > 0))
    throw std::logic_error("generation network: attention feature presence does not match configuration");
  if (h_a) return generation_net(ctx, concat_cols<Scalar>({h_x, z, *h_a}));
  return generation_net(ctx, concat_cols<Scalar>({h_x, z}));
}

template <typename Scalar>
void Cvae<Scalar>::collect(StateRefs<Scalar>& refs) {
  recognition_net.collect(refs);
  prior_net.collect(refs);
  generation_net.collect(refs);
}

template struct LatentVars<float>;
template struct LatentVars<double>;
template Var<float> reparameterize(const LatentVars<float>&, Var<float>);
template Var<double> reparameterize(const LatentVars<double>&, Var<double>);
template Var<float> kl_divergence(const LatentVars<float>&, const LatentVars<float>&);
template Var<double> kl_divergence(const LatentVars<double>&, const LatentVars<double>&);
template class Cvae<float>;
template class Cvae<double>;

}  // namespace mgnet
