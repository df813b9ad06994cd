#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "egan/grad_engine.hpp"
#include "egan/nets.hpp"
#include "helpers.hpp"

using namespace egan;
using egan::testing::random_tensor;

namespace {

// Central differences written out independently of the library helper.
std::vector<Tensor> central_differences(Tape& tape, std::vector<Tensor> point, double h) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < point.size(); ++k) {
    Tensor g(point[k].rows(), point[k].cols());
    for (Eigen::Index i = 0; i < point[k].size(); ++i) {
      const double saved = point[k].data()[i];
      point[k].data()[i] = saved + h;
      const double up = tape.forward(point)(0, 0);
      point[k].data()[i] = saved - h;
      const double down = tape.forward(point)(0, 0);
      point[k].data()[i] = saved;
      g.data()[i] = (up - down) / (2 * h);
    }
    out.push_back(g);
  }
  tape.forward(point);
  return out;
}

double relative_error(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double diff = 0, scale = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]).squaredNorm();
    scale = std::max(scale, std::max(a[k].squaredNorm(), b[k].squaredNorm()));
  }
  return std::sqrt(diff) / std::max(std::sqrt(scale), 1e-12);
}

struct RandomGraph {
  std::unique_ptr<Tape> tape = std::make_unique<Tape>();
  std::vector<Tensor> values;
};

// Grows a graph from a pool of live nodes, applying a random primitive to a
// random member each step. The output sums every pool member so each leaf
// matters.
RandomGraph random_graph(Rng& rng) {
  RandomGraph g;
  Tape& t = *g.tape;
  const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(3));
  const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(3));
  auto leaf = [&](Eigen::Index r, Eigen::Index c) {
    g.values.push_back(random_tensor(rng, r, c, 0.7));
    return t.input(r, c);
  };
  std::vector<Var> pool{leaf(n, k), leaf(n, k)};
  const int steps = 3 + static_cast<int>(rng.below(5));
  for (int s = 0; s < steps; ++s) {
    Var x = pool[rng.below(pool.size())];
    Var y;
    switch (rng.below(10)) {
      case 0: {
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(3));
        Var w = leaf(m, x.cols());
        y = rng.below(2) ? t.affine(x, w, leaf(1, m)) : t.affine(x, w);
        break;
      }
      case 1: y = exp(0.3 * x); break;
      case 2: y = log(square(x) + 1.0); break;
      case 3: y = square(x); break;
      case 4: y = -x; break;
      case 5: y = t.leaky_relu(x, 0.2); break;
      case 6: y = t.log_sum_exp(x, static_cast<Axis>(rng.below(3))); break;
      case 7: y = rng.below(2) ? t.sum(x, static_cast<Axis>(rng.below(3)))
                               : t.mean(x, static_cast<Axis>(rng.below(3)));
        break;
      case 8: {
        Var other = x;
        for (Var p : pool) {
          if (p.id != x.id && p.rows() == x.rows() && p.cols() == x.cols()) other = p;
        }
        y = rng.below(2) ? x + other : 1.5 * x - other;
        break;
      }
      default:
        if (x.cols() == 1) {
          y = broadcast_cols(x, 2);
        } else if (x.rows() == 1) {
          y = broadcast_rows(t.sum(x, Axis::Rows), 3);
        } else {
          y = t.mean(x, Axis::Cols);
        }
    }
    pool.push_back(y);
  }
  std::vector<std::pair<double, Var>> terms;
  for (Var p : pool) terms.emplace_back(rng.uniform() + 0.5, t.sum(p));
  t.set_output(t.lincomb(terms, 0.25));
  return g;
}

}  // namespace

TEST_CASE("square and its gradient") {
  Tape t;
  Var x = t.input(1, 1);
  t.set_output(square(x));
  const std::array<Tensor, 1> at{Tensor::Constant(1, 1, 3.0)};
  CHECK(t.forward(at)(0, 0) == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(t.backward()[0](0, 0) == doctest::Approx(6.0).epsilon(1e-15));
  const auto fd = finite_difference_gradient(t, at, 1e-5);
  CHECK(std::abs(fd[0](0, 0) - 6.0) <= 1e-9);
}

TEST_CASE("log-sum-exp of equal logits") {
  Tape t;
  Var x = t.input(1, 2);
  t.set_output(t.log_sum_exp(x));
  const std::array<Tensor, 1> at{Tensor::Zero(1, 2)};
  CHECK(t.forward(at)(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const auto g = t.backward();
  CHECK(g[0](0, 0) == doctest::Approx(0.5));
  CHECK(g[0](0, 1) == doctest::Approx(0.5));
}

TEST_CASE("log-sum-exp is shift safe") {
  Tape t;
  Var x = t.input(2, 3);
  t.set_output(t.sum(t.log_sum_exp(x, Axis::Rows)));
  Tensor v(2, 3);
  v << 0.5, -1.25, 2.0, 3.0, 0.0, -0.75;
  const std::array<Tensor, 1> base{v};
  const double f0 = t.forward(base)(0, 0);
  const Tensor g0 = t.backward()[0];
  const std::array<Tensor, 1> shifted{Tensor(v.array() + 1e6)};
  const double f1 = t.forward(shifted)(0, 0);
  const Tensor g1 = t.backward()[0];
  const double ulp = std::nextafter(2e6, 3e6) - 2e6;
  CHECK(std::abs((f1 - f0) - 2e6) <= 4 * ulp);
  CHECK((g1 - g0).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("constant function has zero finite-difference gradient") {
  Tape t;
  Var x = t.input(2, 2);
  Var c = t.constant(1, 1);
  t.set_output(t.sum(c) + 0.0 * t.sum(x));
  const std::array<Tensor, 2> at{Tensor::Ones(2, 2), Tensor::Constant(1, 1, 4.0)};
  const auto fd = finite_difference_gradient(t, at, 1e-5);
  CHECK(fd[0].cwiseAbs().maxCoeff() == 0.0);
  t.forward(at);
  const auto g = t.backward();
  CHECK(g[1].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unused leaf gets a zero gradient") {
  Tape t;
  Var x = t.input(2, 2);
  Var unused = t.input(3, 1);
  t.set_output(t.sum(square(x)));
  const std::array<Tensor, 2> at{Tensor::Ones(2, 2), Tensor::Ones(3, 1)};
  t.forward(at);
  const auto g = t.backward();
  CHECK(g[1].cwiseAbs().maxCoeff() == 0.0);
  CHECK(t.grad(unused).size() == 3);
}

TEST_CASE("tape errors") {
  Tape t;
  Var x = t.input(2, 2);
  t.set_output(t.sum(x));
  CHECK_THROWS_AS(t.backward(), StateError);
  const std::array<Tensor, 1> wrong{Tensor::Ones(3, 2)};
  CHECK_THROWS_AS(t.forward(wrong), ShapeError);
  Var w = t.input(4, 3);
  CHECK_THROWS_AS(t.affine(x, w), ShapeError);

  Tape u;
  Var z = u.input(1, 1);
  u.set_output(u.log(z));
  const std::array<Tensor, 1> neg{Tensor::Constant(1, 1, -1.0)};
  CHECK_THROWS_AS(u.forward(neg), NumericError);

  Tape vec;
  Var q = vec.input(1, 2);
  vec.set_output(q);
  const std::array<Tensor, 1> ok{Tensor::Ones(1, 2)};
  vec.forward(ok);
  CHECK_THROWS_AS(vec.backward(), StateError);
}

TEST_CASE("three-layer net forward matches a straight-line reimplementation") {
  Rng rng(41);
  const MlpSpec spec{{3, 5, 4, 2}, {Activation::LeakyRelu, Activation::LeakyRelu}};
  const MlpParams p = init_params(spec, 9);
  MlpParams q = p;
  for (auto& b : q.biases) b = random_tensor(rng, b.rows(), b.cols());
  const Tensor batch = random_tensor(rng, 6, 3);

  Tape t;
  Var x = t.input(6, 3);
  MlpVars net = declare_mlp(t, spec, true, "net");
  t.set_output(mlp_forward(net, x));
  t.set(x, batch);
  net.assign(t, q);
  const Tensor& out = t.forward();

  for (Eigen::Index r = 0; r < 6; ++r) {
    std::vector<double> h(batch.row(r).data(), batch.row(r).data() + 3);
    for (std::size_t layer = 0; layer < 3; ++layer) {
      const Tensor& w = q.weights[layer];
      std::vector<double> next(static_cast<std::size_t>(w.rows()));
      for (Eigen::Index o = 0; o < w.rows(); ++o) {
        double s = q.biases[layer](0, o);
        for (Eigen::Index i = 0; i < w.cols(); ++i) s += w(o, i) * h[i];
        if (layer < 2 && s < 0) s *= 0.2;
        next[o] = s;
      }
      h = next;
    }
    CHECK(std::abs(out(r, 0) - h[0]) <= 1e-12);
    CHECK(std::abs(out(r, 1) - h[1]) <= 1e-12);
  }
}

TEST_CASE("backward matches central differences on random graphs") {
  Rng rng(2024);
  double worst = 0, worst_lib = 0;
  for (int trial = 0; trial < 100; ++trial) {
    RandomGraph g = random_graph(rng);
    g.tape->forward(g.values);
    const auto analytic = g.tape->backward();
    const auto fd = central_differences(*g.tape, g.values, 1e-5);
    const auto lib = finite_difference_gradient(*g.tape, g.values, 1e-5);
    worst = std::max(worst, relative_error(analytic, fd));
    worst_lib = std::max(worst_lib, relative_error(lib, fd));
  }
  CHECK(worst <= 1e-5);
  CHECK(worst_lib <= 1e-12);
}

TEST_CASE("gradients are linear in the objective") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    Var x = t.input(3, 2);
    Var w = t.input(2, 2);
    Var f = t.sum(exp(0.5 * t.affine(x, w)));
    Var g = t.log_sum_exp(square(x));
    const double a = rng.normal(), b = rng.normal();
    const std::pair<double, Var> terms[] = {{a, f}, {b, g}};
    Var h = t.lincomb(terms);
    const std::vector<Tensor> at{random_tensor(rng, 3, 2), random_tensor(rng, 2, 2)};
    auto grads_of = [&](Var out) {
      t.set_output(out);
      t.forward(at);
      return t.backward();
    };
    const auto gf = grads_of(f), gg = grads_of(g), gh = grads_of(h);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK((gh[k] - (a * gf[k] + b * gg[k])).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("each primitive matches finite differences on normal inputs") {
  Rng rng(77);
  for (int op = 0; op < 9; ++op) {
    Tape t;
    Var x = t.input(3, 4);
    Var w = t.input(2, 4);
    Var y;
    switch (op) {
      case 0: y = t.affine(x, w); break;
      case 1: y = exp(x); break;
      case 2: y = log(exp(x)); break;
      case 3: y = square(x); break;
      case 4: y = -x; break;
      case 5: y = t.leaky_relu(x, 0.2); break;
      case 6: y = t.log_sum_exp(x, Axis::Cols); break;
      case 7: y = t.mean(x, Axis::Rows); break;
      default: y = x - 2.0 * x + 3.0; break;
    }
    // Weight the output so reductions over equal entries are not symmetric.
    Var mix = t.constant(y.rows(), y.cols());
    Var out = t.sum(exp(0.1 * y)) + 0.5 * t.log_sum_exp(y + mix);
    t.set_output(out);
    const std::vector<Tensor> at{random_tensor(rng, 3, 4), random_tensor(rng, 2, 4),
                                 random_tensor(rng, y.rows(), y.cols())};
    t.forward(at);
    const auto analytic = t.backward();
    auto fd = central_differences(t, at, 1e-5);
    // The mixing leaf is a constant: no gradient by design.
    CHECK(analytic[2].cwiseAbs().maxCoeff() == 0.0);
    fd.pop_back();
    CHECK_MESSAGE(relative_error({analytic[0], analytic[1]}, fd) <= 1e-5, "primitive ", op);
  }
}
