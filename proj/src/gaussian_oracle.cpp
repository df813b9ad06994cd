#include "egan/gaussian_oracle.hpp"

#include <cmath>

#include "egan/coupling_inference.hpp"
#include "egan/random.hpp"

namespace egan {

SampleBatch sample_data(const LinearGaussianOracle& oracle, Eigen::Index n, std::uint64_t seed) {
  if (n < 0) throw InvalidArgument("sample_data: negative sample count");
  const Eigen::Index d = oracle.data_dim();
  const Eigen::Index r = oracle.latent_dim();
  const double noise = std::sqrt(oracle.lambda());
  Rng rng(seed);
  Matrix y(n, d);
  Vector x(r);
  Vector eps(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < r; ++k) x(k) = rng.normal();
    for (Eigen::Index k = 0; k < d; ++k) eps(k) = rng.normal();
    y.row(i) = (oracle.g() * x + oracle.offset() + noise * eps).transpose();
  }
  if (n == 0) return SampleBatch{};
  return SampleBatch(std::move(y));
}

GapEstimate approximation_gap(const LinearGaussianOracle& oracle, const Vector& y_test,
                              const ConditionalLatentPosterior& posterior) {
  if (posterior.mode != WeightMode::Snis) {
    throw InvalidArgument("approximation_gap: posterior must use snis weights");
  }
  if (posterior.latents.cols() != oracle.latent_dim()) {
    throw ShapeError("approximation_gap: latent dimension does not match the oracle");
  }
  const Eigen::Index n = posterior.size();
  Vector h(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double log_q = oracle.log_posterior_density(posterior.latents.row(i).transpose(), y_test);
    if (!std::isfinite(log_q)) throw NumericError("approximation_gap: oracle density vanishes at a sample");
    h(i) = posterior.log_prior(i) + posterior.violations(i) / posterior.lambda - posterior.log_z - log_q;
  }
  GapEstimate g;
  g.kl = posterior.p.dot(h);
  const Vector dev = posterior.p.cwiseProduct((h.array() - g.kl).matrix()) -
                    detail::log_normalizer_influence(posterior);
  g.standard_error = std::sqrt(dev.squaredNorm());
  return g;
}

}  // namespace egan
