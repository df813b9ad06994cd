#include "egan/coupling_inference.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "egan/nets.hpp"
#include "egan/random.hpp"

namespace egan {

PotentialModel potential_view(const EntropicGanModel& model) {
  model.validate();
  PotentialModel v;
  v.generator = [g = model.generator](const Matrix& x) { return mlp_forward(g, x); };
  v.d1 = [d = model.d1](const Matrix& y) { return mlp_forward(d, y); };
  v.d2 = [d = model.d2](const Matrix& y) { return mlp_forward(d, y); };
  v.lambda = model.lambda;
  v.loss = model.loss;
  v.latent_dim = model.latent_dim;
  v.data_dim = model.data_dim;
  v.train_size = model.train_size;
  return v;
}

const char* weight_mode_name(WeightMode m) { return m == WeightMode::Algorithm1 ? "algorithm1" : "snis"; }

WeightMode parse_weight_mode(const std::string& s) {
  if (s == "algorithm1") return WeightMode::Algorithm1;
  if (s == "snis") return WeightMode::Snis;
  throw InvalidArgument("unknown weight mode '" + s + "'");
}

double joint_coupling_density(Eigen::Index i, Eigen::Index j, const Vector& a, const Vector& b,
                              const Matrix& violations, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("joint_coupling_density: lambda must be positive");
  return a(i) * b(j) * std::exp(violations(i, j) / lambda);
}

Matrix joint_coupling_density(const Vector& a, const Vector& b, const Matrix& violations,
                              double lambda) {
  if (violations.rows() != a.size() || violations.cols() != b.size()) {
    throw ShapeError("joint_coupling_density: violation matrix does not match marginals");
  }
  Matrix out(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      out(i, j) = joint_coupling_density(i, j, a, b, violations, lambda);
    }
  }
  return out;
}

Vector standard_normal_log_density(const Matrix& x) {
  const double c = 0.5 * static_cast<double>(x.cols()) * std::log(2.0 * std::numbers::pi);
  return (-0.5 * x.rowwise().squaredNorm()).array() - c;
}

Matrix draw_latents(Eigen::Index n, int latent_dim, std::uint64_t seed) {
  Rng rng(seed);
  return rng.normal_matrix(n, latent_dim);
}

ConditionalLatentPosterior posterior_from_latents(const Vector& y, const PotentialModel& model,
                                                  const Matrix& latents, const Vector& log_base,
                                                  WeightMode mode) {
  if (y.size() != model.data_dim) {
    throw ShapeError("latent_posterior: test point has dimension " + std::to_string(y.size()) +
                     ", model expects " + std::to_string(model.data_dim));
  }
  if (latents.rows() < 1) throw InvalidArgument("latent_posterior: need at least one latent");
  if (latents.cols() != model.latent_dim || log_base.size() != latents.rows()) {
    throw ShapeError("latent_posterior: latent batch shape mismatch");
  }
  if (!(model.lambda > 0.0)) throw InvalidArgument("latent_posterior: lambda must be positive");
  const Eigen::Index n = latents.rows();
  ConditionalLatentPosterior post;
  post.y = y;
  post.latents = latents;
  post.outputs = model.generator(latents);
  if (post.outputs.rows() != n || post.outputs.cols() != model.data_dim) {
    throw ShapeError("latent_posterior: generator output has the wrong shape");
  }
  const double d1 = model.d1(y.transpose())(0, 0);
  const Matrix d2 = model.d2(post.outputs);
  post.losses.resize(n);
  post.violations.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    post.losses(i) = loss_of_difference(model.loss, (y - post.outputs.row(i).transpose()).eval());
    post.violations(i) = d1 - d2(i, 0) - post.losses(i);
  }
  post.log_base = log_base;
  post.log_prior = standard_normal_log_density(latents);
  post.lambda = model.lambda;
  post.mode = mode;

  const Vector scaled = post.violations / model.lambda;
  post.log_z = detail::log_sum_exp(Vector(log_base + scaled));
  post.log_u = log_base + scaled;
  if (mode == WeightMode::Algorithm1) post.log_u += post.log_prior;
  const double lse = detail::log_sum_exp(post.log_u);
  if (!std::isfinite(lse)) {
    throw NumericError("latent_posterior: all weights underflow; increase the sample count or lambda");
  }
  post.p = (post.log_u.array() - lse).exp();
  return post;
}

namespace detail {

Vector log_normalizer_influence(const ConditionalLatentPosterior& post) {
  const double lb = log_sum_exp(post.log_base);
  const Vector q = (post.log_base + post.violations / post.lambda).array() - post.log_z;
  return q.array().exp() - (post.log_base.array() - lb).exp();
}

}  // namespace detail

ConditionalLatentPosterior latent_posterior(const Vector& y, const PotentialModel& model,
                                            Eigen::Index n, std::uint64_t seed, WeightMode mode) {
  if (n < 1) throw InvalidArgument("latent_posterior: need at least one latent");
  const Vector base = Vector::Constant(n, -std::log(static_cast<double>(n)));
  return posterior_from_latents(y, model, draw_latents(n, model.latent_dim, seed), base, mode);
}

ConditionalLatentPosterior latent_posterior(const Vector& y, const EntropicGanModel& model,
                                            Eigen::Index n, std::uint64_t seed, WeightMode mode) {
  return latent_posterior(y, potential_view(model), n, seed, mode);
}

Matrix w2_pushforward(const Matrix& y, const std::function<Var(Var)>& discriminator) {
  Tape tape;
  Var in = tape.input(y.rows(), y.cols(), "y");
  Var d = discriminator(in);
  if (d.rows() != y.rows() || d.cols() != 1) {
    throw ShapeError("w2_pushforward: discriminator must map each row to a scalar");
  }
  tape.set_output(tape.sum(d));
  tape.set(in, y);
  tape.forward();
  const Tensor grad = tape.backward()[0];
  if (!grad.allFinite()) throw NumericError("w2_pushforward: non-finite discriminator gradient");
  return y - grad;
}

Matrix w2_pushforward(const Matrix& y, const MlpParams& discriminator) {
  if (discriminator.spec.output_width() != 1) {
    throw ShapeError("w2_pushforward: discriminator must be scalar-valued");
  }
  // Parameters enter as fixed nodes so the only gradient leaf is y.
  return w2_pushforward(y, [&discriminator](Var x) {
    Tape& t = *x.tape;
    Var h = x;
    const MlpSpec& spec = discriminator.spec;
    for (std::size_t k = 0; k < spec.layers(); ++k) {
      h = t.affine(h, t.fixed(discriminator.weights[k]), t.fixed(discriminator.biases[k]));
      if (k + 1 < spec.layers() && spec.hidden[k] == Activation::LeakyRelu) {
        h = t.leaky_relu(h, kLeakySlope);
      }
    }
    return h;
  });
}

NearestLatent nearest_latent_coupling(const Vector& y, const PotentialModel& model, Eigen::Index k,
                                      std::uint64_t seed) {
  if (k < 1) throw InvalidArgument("nearest_latent_coupling: k must be at least 1");
  if (y.size() != model.data_dim) throw ShapeError("nearest_latent_coupling: dimension mismatch");
  const Matrix x = draw_latents(k, model.latent_dim, seed);
  const Matrix out = model.generator(x);
  Eigen::Index best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  double best_norm = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < k; ++i) {
    const double l = loss_of_difference(model.loss, (y - out.row(i).transpose()).eval());
    const double nx = x.row(i).squaredNorm();
    if (l < best_loss || (l == best_loss && nx < best_norm)) {
      best = i;
      best_loss = l;
      best_norm = nx;
    }
  }
  NearestLatent r;
  r.index = best;
  r.latent = x.row(best).transpose();
  r.posterior = posterior_from_latents(y, model, x.row(best), Vector::Zero(1), WeightMode::Snis);
  return r;
}

}  // namespace egan
