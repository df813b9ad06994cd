#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "doctest.h"
#include "egan/coupling_inference.hpp"
#include "egan/gaussian_oracle.hpp"
#include "egan/ot_core.hpp"
#include "helpers.hpp"

using namespace egan;
using egan::testing::linear_1d;
using egan::testing::max_abs;
using egan::testing::normal_log_pdf;
using egan::testing::random_simplex;
using egan::testing::random_tensor;
using egan::testing::simpson;

namespace {

PotentialModel zero_model(int r, int d) {
  PotentialModel m;
  m.lambda = 1.0;
  m.latent_dim = r;
  m.data_dim = d;
  m.generator = [d](const Matrix& x) { return Matrix(Matrix::Zero(x.rows(), d)); };
  m.d1 = [](const Matrix& y) { return Matrix(Matrix::Zero(y.rows(), 1)); };
  m.d2 = m.d1;
  return m;
}

double weighted_mean(const Vector& p, const Vector& f) { return p.dot(f); }

double weighted_se(const Vector& p, const Vector& f) {
  const double m = p.dot(f);
  return std::sqrt((p.array().square() * (f.array() - m).square()).sum());
}

}  // namespace

TEST_CASE("joint coupling density examples") {
  const Vector a = Vector::Constant(2, 0.5);
  const Vector b = Vector::Ones(1);
  Matrix v = Matrix::Zero(2, 1);
  CHECK(joint_coupling_density(0, 0, a, b, v, 1.0) == 0.5);
  v(1, 0) = 0.3 * std::log(2.0);
  CHECK(joint_coupling_density(1, 0, a, b, v, 0.3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(joint_coupling_density(0, 0, a, b, v, 0.0), InvalidArgument);
  CHECK_THROWS_AS(joint_coupling_density(a, b, Matrix::Zero(3, 1), 1.0), ShapeError);
}

TEST_CASE("joint density rebuilds the Sinkhorn plan from its potentials") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial % 5, m = 3 + trial % 4;
    const Matrix y = random_tensor(rng, n, 2), yh = random_tensor(rng, m, 2);
    const Vector a = random_simplex(rng, n), b = random_simplex(rng, m);
    const double lambda = trial % 2 ? 0.5 : 2.0;
    const Matrix c = cost_matrix<double>(LossKind::HalfSquaredL2, y, yh);
    const SinkhornResult res = sinkhorn<double>(c, a, b, lambda);
    Matrix v(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        v(i, j) = res.potentials.phi(i) - res.potentials.psi(j) - c(i, j);
      }
    }
    CHECK(max_abs(joint_coupling_density(a, b, v, lambda) - res.coupling.plan) <= 1e-8);
  }
}

TEST_CASE("zero networks give uniform weights") {
  const PotentialModel m = zero_model(2, 3);
  const ConditionalLatentPosterior post = latent_posterior(Vector::Ones(3), m, 50, 4, WeightMode::Snis);
  CHECK(max_abs(post.p - Vector::Constant(50, 1.0 / 50)) <= 1e-15);
  CHECK(post.log_z == doctest::Approx(-1.5).epsilon(1e-12));  // v = -||y||^2 / 2

  const ConditionalLatentPosterior one = latent_posterior(Vector::Ones(3), m, 1, 4, WeightMode::Algorithm1);
  CHECK(one.p(0) == 1.0);

  CHECK_THROWS_AS(latent_posterior(Vector::Ones(2), m, 5, 0, WeightMode::Snis), ShapeError);
  CHECK_THROWS_AS(latent_posterior(Vector::Ones(3), m, 0, 0, WeightMode::Snis), InvalidArgument);
  CHECK(parse_weight_mode(weight_mode_name(WeightMode::Snis)) == WeightMode::Snis);
  CHECK_THROWS(parse_weight_mode("uniform"));
}

TEST_CASE("algorithm1 weights carry an extra prior factor") {
  const PotentialModel m = linear_1d(1.2, 0.4);
  const Vector y = Vector::Constant(1, 0.7);
  const auto snis = latent_posterior(y, m, 300, 9, WeightMode::Snis);
  const auto alg = latent_posterior(y, m, 300, 9, WeightMode::Algorithm1);
  Vector expected = (snis.log_u + snis.log_prior).array().exp();
  expected /= expected.sum();
  CHECK(max_abs(alg.p - expected) <= 1e-12);
  CHECK(alg.log_z == snis.log_z);
}

TEST_CASE("weights are normalized and invariant to a constant violation shift") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const double g = 0.5 + rng.uniform() * 2, lambda = 0.1 + rng.uniform(), shift = 10 * rng.normal();
    PotentialModel m = linear_1d(g, lambda, rng.normal());
    PotentialModel shifted = m;
    shifted.d1 = [d1 = m.d1, shift](const Matrix& y) { return Matrix(d1(y).array() + shift); };
    const Vector y = Vector::Constant(1, rng.normal());
    const auto mode = trial % 2 ? WeightMode::Snis : WeightMode::Algorithm1;
    const auto p0 = latent_posterior(y, m, 200, trial, mode);
    const auto p1 = latent_posterior(y, shifted, 200, trial, mode);
    CHECK(std::abs(p0.p.sum() - 1.0) <= 1e-12);
    CHECK((p0.p.array() >= 0).all());
    CHECK(max_abs(p0.p - p1.p) <= 1e-12);
    CHECK(p1.log_z - p0.log_z == doctest::Approx(shift / lambda).epsilon(1e-9));
  }
}

TEST_CASE("snis posterior matches the exact linear-Gaussian posterior") {
  const double g = 1.5, lambda = 0.5;
  const PotentialModel m = linear_1d(g, lambda);
  const LinearGaussianOracle oracle(Matrix::Constant(1, 1, g), lambda);
  for (double yv : {-1.0, 0.3, 2.0}) {
    const Vector y = Vector::Constant(1, yv);
    const auto post = latent_posterior(y, m, 10000, 77, WeightMode::Snis);
    const Vector x = post.latents.col(0);
    const double mean = weighted_mean(post.p, x);
    CHECK(std::abs(mean - oracle.r()(0, 0) * yv) <= 3 * weighted_se(post.p, x));
    // Exact potentials normalize the Gibbs density, so log Z estimates log 1.
    CHECK(std::abs(post.log_z) <= 0.05);

    // Bounded test function against its quadrature value.
    const double var = oracle.posterior_covariance()(0, 0);
    const double mu = oracle.r()(0, 0) * yv;
    const double truth = simpson([&](double t) { return std::sin(t) * std::exp(normal_log_pdf(t, mu, var)); },
                                 mu - 12, mu + 12);
    const Vector s = x.array().sin();
    CHECK(std::abs(weighted_mean(post.p, s) - truth) <= 3 * weighted_se(post.p, s));
  }
}

TEST_CASE("quadrature-node posterior reproduces the Gibbs normalizer") {
  const PotentialModel m = linear_1d(0.8, 0.3);
  const auto q = egan::testing::simpson_nodes(-10, 10, 4097);
  const auto post = posterior_from_latents(Vector::Constant(1, 1.1), m, q.x, q.log_base, WeightMode::Snis);
  CHECK(std::abs(post.log_z) <= 1e-10);
  CHECK_THROWS_AS(posterior_from_latents(Vector::Constant(1, 1.1), m, q.x, Vector::Zero(3), WeightMode::Snis),
                  ShapeError);
}

TEST_CASE("W2 pushforward") {
  Rng rng(2);
  const Matrix y = random_tensor(rng, 6, 3);
  CHECK(max_abs(w2_pushforward(y, [](Var x) {
          Tape& t = *x.tape;
          return t.affine(x, t.fixed(Tensor::Zero(1, 3)));
        }) - y) == 0.0);

  const Tensor c = random_tensor(rng, 1, 3);
  const Matrix to_c = w2_pushforward(y, [&](Var x) {
    Tape& t = *x.tape;
    const std::pair<double, Var> terms[] = {{0.5, t.sum(t.square(x), Axis::Rows)},
                                            {-1.0, t.affine(x, t.fixed(c))}};
    return t.lincomb(terms);
  });
  for (Eigen::Index i = 0; i < y.rows(); ++i) CHECK(max_abs(to_c.row(i) - c) <= 1e-12);

  for (double alpha : {0.0, 0.25, 1.0, 3.0}) {
    const Matrix out = w2_pushforward(y, [&](Var x) {
      Tape& t = *x.tape;
      const std::pair<double, Var> terms[] = {{0.5 * alpha, t.sum(t.square(x), Axis::Rows)}};
      return t.lincomb(terms);
    });
    CHECK(max_abs(out - (1 - alpha) * y) <= 1e-12);
  }

  // Linear MLP discriminator: gradient is the collapsed weight row.
  MlpParams d = init_params(MlpSpec::uniform({3, 4, 1}, Activation::Identity), 6);
  const AffineMap lin = collapse_linear(d);
  const Matrix pushed = w2_pushforward(y, d);
  for (Eigen::Index i = 0; i < y.rows(); ++i) CHECK(max_abs(pushed.row(i) - (y.row(i) - lin.matrix.row(0))) <= 1e-12);

  CHECK_THROWS_AS(w2_pushforward(y, [](Var x) { return x; }), ShapeError);
}

TEST_CASE("nearest latent coupling") {
  const PotentialModel ident = [] {
    PotentialModel m = zero_model(2, 2);
    m.generator = [](const Matrix& x) { return x; };
    return m;
  }();
  const Vector y = (Vector(2) << 0.4, -0.9).finished();

  const NearestLatent one = nearest_latent_coupling(y, ident, 1, 13);
  CHECK(one.index == 0);
  CHECK(max_abs(one.latent - draw_latents(1, 2, 13).row(0).transpose()) == 0.0);
  CHECK(one.posterior.p(0) == 1.0);

  // Brute-force scan over the same draws.
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Matrix x = draw_latents(500, 2, seed);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < x.rows(); ++i) {
      if ((x.row(i).transpose() - y).squaredNorm() < (x.row(best).transpose() - y).squaredNorm()) best = i;
    }
    const NearestLatent nl = nearest_latent_coupling(y, ident, 500, seed);
    CHECK(nl.index == best);
    CHECK(max_abs(nl.posterior.latents - x.row(best)) == 0.0);
  }

  // Constant generator: every loss ties, so the smallest-norm latent wins.
  const NearestLatent tie = nearest_latent_coupling(y, zero_model(2, 2), 200, 8);
  const Matrix x = draw_latents(200, 2, 8);
  Eigen::Index smallest;
  x.rowwise().squaredNorm().minCoeff(&smallest);
  CHECK(tie.index == smallest);

  CHECK_THROWS_AS(nearest_latent_coupling(y, ident, 0, 1), InvalidArgument);
}
