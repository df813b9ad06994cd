#ifndef EGAN_COUPLING_INFERENCE_HPP_
#define EGAN_COUPLING_INFERENCE_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include "egan/entropic_gan.hpp"
#include "egan/grad_engine.hpp"
#include "egan/ot_core.hpp"
#include "egan/types.hpp"

namespace egan {

// Batch-callable generator and potentials. Lets the inference code run on a
// trained model or on hand-written closed-form potentials alike.
struct PotentialModel {
  std::function<Matrix(const Matrix&)> generator;  // N x r -> N x d
  std::function<Matrix(const Matrix&)> d1;         // N x d -> N x 1
  std::function<Matrix(const Matrix&)> d2;         // N x d -> N x 1
  double lambda = 1.0;
  LossKind loss = LossKind::HalfSquaredL2;
  int latent_dim = 0;
  int data_dim = 0;
  std::int64_t train_size = 1;
};

// The returned view holds a copy of the model's parameters.
PotentialModel potential_view(const EntropicGanModel& model);

enum class WeightMode {
  Algorithm1,  // u_i = phi(x_i) exp(v_i / lambda)
  Snis,        // u_i = exp(v_i / lambda)
};

const char* weight_mode_name(WeightMode m);
WeightMode parse_weight_mode(const std::string& s);

// Weighted latent sample for one test point. All weights live in the log
// domain; `log_base` is the log base-measure weight of each latent (-log N
// for prior draws, log(w_i phi(x_i)) for quadrature nodes).
struct ConditionalLatentPosterior {
  Vector y;
  Matrix latents;     // N x r
  Matrix outputs;     // N x d, G(x_i)
  Vector losses;      // l(y, G(x_i))
  Vector violations;  // v_i
  Vector log_base;
  Vector log_prior;   // log phi(x_i)
  Vector log_u;
  Vector p;
  double log_z = 0.0;  // log sum_i exp(log_base_i + v_i / lambda)
  double lambda = 1.0;
  WeightMode mode = WeightMode::Algorithm1;

  Eigen::Index size() const { return latents.rows(); }
};

// P_Y(y_i) P_Yhat(yhat_j) exp(v_ij / lambda).
double joint_coupling_density(Eigen::Index i, Eigen::Index j, const Vector& a, const Vector& b,
                              const Matrix& violations, double lambda);
Matrix joint_coupling_density(const Vector& a, const Vector& b, const Matrix& violations,
                              double lambda);

// log N(x; 0, I) per row.
Vector standard_normal_log_density(const Matrix& x);

// N i.i.d. standard-normal latents.
Matrix draw_latents(Eigen::Index n, int latent_dim, std::uint64_t seed);

ConditionalLatentPosterior posterior_from_latents(const Vector& y, const PotentialModel& model,
                                                  const Matrix& latents, const Vector& log_base,
                                                  WeightMode mode);

ConditionalLatentPosterior latent_posterior(const Vector& y, const PotentialModel& model,
                                            Eigen::Index n, std::uint64_t seed, WeightMode mode);
ConditionalLatentPosterior latent_posterior(const Vector& y, const EntropicGanModel& model,
                                            Eigen::Index n, std::uint64_t seed, WeightMode mode);

namespace detail {
// Per-sample linearization of log Z around its estimate:
// exp(log_base_i + v_i / lambda - log Z) - normalized base weight i.
Vector log_normalizer_influence(const ConditionalLatentPosterior& post);
}  // namespace detail

// y_i - grad D(y_i) per row, gradient taken on a tape.
Matrix w2_pushforward(const Matrix& y, const std::function<Var(Var)>& discriminator);
Matrix w2_pushforward(const Matrix& y, const MlpParams& discriminator);

struct NearestLatent {
  Vector latent;
  Eigen::Index index = 0;
  ConditionalLatentPosterior posterior;  // all mass on `latent`
};

// Draws k prior latents and keeps the one whose output is closest to y under
// the model loss; ties go to the smaller ||x||, then the smaller index.
NearestLatent nearest_latent_coupling(const Vector& y, const PotentialModel& model, Eigen::Index k,
                                      std::uint64_t seed);

}  // namespace egan

#endif  // EGAN_COUPLING_INFERENCE_HPP_
