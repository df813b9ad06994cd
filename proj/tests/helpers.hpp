#ifndef EGAN_TESTS_HELPERS_HPP_
#define EGAN_TESTS_HELPERS_HPP_

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "egan/coupling_inference.hpp"
#include "egan/random.hpp"
#include "egan/types.hpp"

namespace egan::testing {

// Composite Simpson rule on [lo, hi] with `nodes` points (odd).
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int nodes = 8193) {
  if (nodes % 2 == 0) ++nodes;
  const double h = (hi - lo) / (nodes - 1);
  double s = f(lo) + f(hi);
  for (int k = 1; k < nodes - 1; ++k) s += (k % 2 ? 4.0 : 2.0) * f(lo + k * h);
  return s * h / 3.0;
}

inline double normal_log_pdf(double x, double mean, double var) {
  const double z = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + z * z / var);
}

inline Tensor random_tensor(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

inline Vector random_simplex(Rng& rng, Eigen::Index n) {
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) w(i) = 0.1 + rng.uniform();
  return w / w.sum();
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// Simpson nodes on [lo, hi] as a latent batch with log base weights
// log(w_i phi(x_i)), so weighted sums over them are integrals against the
// standard normal prior.
struct QuadratureNodes {
  Matrix x;
  Vector log_base;
};

inline QuadratureNodes simpson_nodes(double lo, double hi, int nodes = 8193) {
  if (nodes % 2 == 0) ++nodes;
  const double h = (hi - lo) / (nodes - 1);
  QuadratureNodes q{Matrix(nodes, 1), Vector(nodes)};
  for (int k = 0; k < nodes; ++k) {
    const double x = lo + k * h;
    const double w = (k == 0 || k == nodes - 1 ? 1.0 : (k % 2 ? 4.0 : 2.0)) * h / 3.0;
    q.x(k, 0) = x;
    q.log_base(k) = std::log(w) + normal_log_pdf(x, 0.0, 1.0);
  }
  return q;
}

// One-dimensional linear model: generator x -> g x, quadratic loss. With
// tilt = 0 the potentials are the exact ones (D2 = 0 and D1 normalizing the
// conditional), so the coupling posterior equals the Bayes posterior. A
// nonzero tilt adds tilt * yhat^2 / 2 to D2 and biases the posterior.
inline PotentialModel linear_1d(double g, double lambda, double tilt = 0.0) {
  PotentialModel m;
  m.lambda = lambda;
  m.loss = LossKind::HalfSquaredL2;
  m.latent_dim = 1;
  m.data_dim = 1;
  m.train_size = 1000;
  m.generator = [g](const Matrix& x) { return Matrix(g * x); };
  const double log_c = -0.5 * std::log(2.0 * std::numbers::pi * lambda);
  m.d1 = [=](const Matrix& y) {
    Matrix out(y.rows(), 1);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      out(i, 0) = lambda * (log_c - normal_log_pdf(y(i, 0), 0.0, g * g + lambda));
    }
    return out;
  };
  m.d2 = [tilt](const Matrix& yh) { return Matrix(0.5 * tilt * yh.array().square().matrix()); };
  return m;
}

}  // namespace egan::testing

#endif  // EGAN_TESTS_HELPERS_HPP_
