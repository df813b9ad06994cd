#ifndef EGAN_OT_CORE_HPP_
#define EGAN_OT_CORE_HPP_

// Discrete entropic optimal transport between weighted point clouds.
//
// Conventions used throughout:
//   pi_ij = a_i b_j exp((phi_i - psi_j - C_ij) / lambda)
// so phi plays the role of the real-side potential and psi the generated-side
// potential; 0 log 0 is taken as 0 in every entropy.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "egan/types.hpp"

namespace egan {

enum class LossKind { L2Norm, HalfSquaredL2 };

inline const char* loss_name(LossKind k) {
  return k == LossKind::L2Norm ? "l2_norm" : "half_squared_l2";
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "l2_norm" || s == "l2") return LossKind::L2Norm;
  if (s == "half_squared_l2" || s == "quadratic") return LossKind::HalfSquaredL2;
  throw InvalidArgument("unknown loss '" + s + "'");
}

// l(y, yhat) = h(y - yhat).
template <typename Derived>
typename Derived::Scalar loss_of_difference(LossKind kind, const Eigen::MatrixBase<Derived>& diff) {
  using Scalar = typename Derived::Scalar;
  const Scalar sq = diff.squaredNorm();
  return kind == LossKind::L2Norm ? Scalar(std::sqrt(sq)) : Scalar(sq / Scalar(2));
}

template <typename Scalar>
struct SampleBatchT {
  MatrixX<Scalar> points;  // n x d
  VectorX<Scalar> weights;  // length n, sums to one

  SampleBatchT() = default;
  explicit SampleBatchT(MatrixX<Scalar> pts)
      : points(std::move(pts)),
        weights(VectorX<Scalar>::Constant(points.rows(), Scalar(1) / Scalar(points.rows()))) {}
  SampleBatchT(MatrixX<Scalar> pts, VectorX<Scalar> w) : points(std::move(pts)), weights(std::move(w)) {
    validate();
  }

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  void validate() const {
    if (weights.size() != points.rows()) {
      throw ShapeError("SampleBatch: " + std::to_string(weights.size()) + " weights for " +
                       std::to_string(points.rows()) + " points");
    }
    if (points.rows() == 0) return;
    if ((weights.array() < Scalar(0)).any()) throw InvalidArgument("SampleBatch: negative weight");
    using std::abs;
    if (abs(weights.sum() - Scalar(1)) > Scalar(1e-12)) {
      throw InvalidArgument("SampleBatch: weights do not sum to one");
    }
  }
};

using SampleBatch = SampleBatchT<double>;

template <typename Scalar>
MatrixX<Scalar> cost_matrix(LossKind loss, const MatrixX<Scalar>& y, const MatrixX<Scalar>& yhat) {
  if (y.cols() != yhat.cols()) {
    throw ShapeError("cost_matrix: dimension " + std::to_string(y.cols()) + " vs " +
                     std::to_string(yhat.cols()));
  }
  MatrixX<Scalar> c(y.rows(), yhat.rows());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    for (Eigen::Index j = 0; j < yhat.rows(); ++j) {
      c(i, j) = loss_of_difference(loss, (y.row(i) - yhat.row(j)).eval());
    }
  }
  return c;
}

template <typename Scalar>
MatrixX<Scalar> cost_matrix(LossKind loss, const SampleBatchT<Scalar>& y,
                            const SampleBatchT<Scalar>& yhat) {
  return cost_matrix<Scalar>(loss, y.points, yhat.points);
}

template <typename Scalar>
struct CouplingT {
  MatrixX<Scalar> plan;
  VectorX<Scalar> a;
  VectorX<Scalar> b;

  Scalar marginal_violation() const {
    const Scalar rows = (plan.rowwise().sum() - a).cwiseAbs().maxCoeff();
    const Scalar cols = (plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
    return std::max(rows, cols);
  }
};

template <typename Scalar>
struct DiscreteDualPotentialsT {
  VectorX<Scalar> phi;
  VectorX<Scalar> psi;
  Scalar lambda{};
};

template <typename Scalar>
struct SinkhornResultT {
  CouplingT<Scalar> coupling;
  DiscreteDualPotentialsT<Scalar> potentials;
  int iterations = 0;
  Scalar residual{};
  // L1 column-marginal violation after each full iteration, when requested.
  std::vector<Scalar> history;
};

using Coupling = CouplingT<double>;
using DiscreteDualPotentials = DiscreteDualPotentialsT<double>;
using SinkhornResult = SinkhornResultT<double>;

struct SinkhornOptions {
  double tol = 1e-9;
  int max_iter = 100000;
  bool record_history = false;
  // Scaling iterations stall when the plan is close to a permutation (small
  // lambda relative to the cost spread). After this many iterations without
  // convergence, small problems (n + m <= newton_max_size) switch to damped
  // Newton steps on the dual potentials. 0 disables the switch.
  int newton_after = 2000;
  int newton_max_size = 400;
  int newton_max_steps = 100;
};

namespace detail {

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  using std::exp;
  using std::log;
  const Scalar mx = x.maxCoeff();
  if (!(mx > -std::numeric_limits<Scalar>::infinity())) return mx;
  return mx + log((x.derived().array() - mx).exp().sum());
}

template <typename Scalar>
VectorX<Scalar> safe_log(const VectorX<Scalar>& v) {
  VectorX<Scalar> out(v.size());
  using std::log;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out(i) = v(i) > Scalar(0) ? Scalar(log(v(i))) : -std::numeric_limits<Scalar>::infinity();
  }
  return out;
}

template <typename Scalar>
void check_marginal(const VectorX<Scalar>& w, const char* what) {
  using std::abs;
  if (w.size() == 0) throw InvalidArgument(std::string("sinkhorn: empty marginal ") + what);
  if ((w.array() < Scalar(0)).any() || abs(w.sum() - Scalar(1)) > Scalar(1e-9)) {
    throw InvalidArgument(std::string("sinkhorn: marginal ") + what + " is not a probability vector");
  }
}

// log pi_ij = la_i + lb_j + phi_i / lambda - psi_j / lambda - C_ij / lambda.
template <typename Scalar>
MatrixX<Scalar> log_plan(const MatrixX<Scalar>& scaled, const VectorX<Scalar>& la,
                         const VectorX<Scalar>& lb, Scalar lambda, const VectorX<Scalar>& phi,
                         const VectorX<Scalar>& psi) {
  MatrixX<Scalar> lp = -scaled;
  lp.colwise() += la + phi / lambda;
  lp.rowwise() += (lb - psi / lambda).transpose();
  return lp;
}

// Damped Newton ascent on the dual
//   F(phi, psi) = <a, phi> - <b, psi> - lambda sum_ij pi_ij(phi, psi),
// with psi_m pinned (F is invariant to a common shift). Returns the max
// marginal violation reached; `steps` is incremented per accepted step.
template <typename Scalar>
Scalar dual_newton(const MatrixX<Scalar>& scaled, const VectorX<Scalar>& la, const VectorX<Scalar>& lb,
                   Scalar lambda, VectorX<Scalar>& phi, VectorX<Scalar>& psi, Scalar tol, int max_steps,
                   int& steps) {
  using std::exp;
  const Eigen::Index n = scaled.rows();
  const Eigen::Index m = scaled.cols();
  const VectorX<Scalar> a = la.array().exp();
  const VectorX<Scalar> b = lb.array().exp();
  auto state = [&](const VectorX<Scalar>& f, const VectorX<Scalar>& g, VectorX<Scalar>& grad,
                   MatrixX<Scalar>& plan) {
    plan = log_plan<Scalar>(scaled, la, lb, lambda, f, g).array().exp();
    grad.resize(n + m - 1);
    grad.head(n) = a - plan.rowwise().sum();
    const VectorX<Scalar> cols = plan.colwise().sum().transpose();
    grad.tail(m - 1) = (cols - b).head(m - 1);
    return std::max(grad.head(n).cwiseAbs().maxCoeff(), (cols - b).cwiseAbs().maxCoeff());
  };
  VectorX<Scalar> grad;
  MatrixX<Scalar> plan;
  Scalar viol = state(phi, psi, grad, plan);
  for (int k = 0; k < max_steps && viol > tol; ++k) {
    // Negated Hessian times lambda, restricted to (phi, psi_1..psi_{m-1}).
    MatrixX<Scalar> h = MatrixX<Scalar>::Zero(n + m - 1, n + m - 1);
    h.topLeftCorner(n, n).diagonal() = plan.rowwise().sum();
    const VectorX<Scalar> cols = plan.colwise().sum().transpose();
    h.bottomRightCorner(m - 1, m - 1).diagonal() = cols.head(m - 1);
    h.topRightCorner(n, m - 1) = -plan.leftCols(m - 1);
    h.bottomLeftCorner(m - 1, n) = -plan.leftCols(m - 1).transpose();
    const VectorX<Scalar> dir = lambda * h.ldlt().solve(grad);
    if (!dir.allFinite()) break;
    Scalar t = 1;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt, t /= 2) {
      VectorX<Scalar> f2 = phi + t * dir.head(n);
      VectorX<Scalar> g2 = psi;
      g2.head(m - 1) += t * dir.tail(m - 1);
      VectorX<Scalar> grad2;
      MatrixX<Scalar> plan2;
      const Scalar v2 = state(f2, g2, grad2, plan2);
      if (v2 < viol) {
        phi = f2;
        psi = g2;
        grad = grad2;
        plan = plan2;
        viol = v2;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++steps;
  }
  return viol;
}

}  // namespace detail

template <typename Scalar>
MatrixX<Scalar> gibbs_plan(const MatrixX<Scalar>& cost, const VectorX<Scalar>& a,
                           const VectorX<Scalar>& b,
                           const DiscreteDualPotentialsT<Scalar>& pot) {
  using std::exp;
  const VectorX<Scalar> la = detail::safe_log(a);
  const VectorX<Scalar> lb = detail::safe_log(b);
  MatrixX<Scalar> plan(cost.rows(), cost.cols());
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      plan(i, j) = exp(la(i) + lb(j) + (pot.phi(i) - pot.psi(j) - cost(i, j)) / pot.lambda);
    }
  }
  return plan;
}

// Log-domain Sinkhorn. Alternates the exact row update for phi and the exact
// column update for psi; stops once the column marginal (the only one left
// unsatisfied after a row update) is within tol in max norm.
template <typename Scalar>
SinkhornResultT<Scalar> sinkhorn(const MatrixX<Scalar>& cost, const VectorX<Scalar>& a,
                                 const VectorX<Scalar>& b, Scalar lambda,
                                 const SinkhornOptions& opt = {}) {
  if (!(lambda > Scalar(0))) throw InvalidArgument("sinkhorn: lambda must be positive");
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw ShapeError("sinkhorn: cost is " + std::to_string(cost.rows()) + "x" +
                     std::to_string(cost.cols()) + " but marginals have sizes " +
                     std::to_string(a.size()) + ", " + std::to_string(b.size()));
  }
  detail::check_marginal(a, "a");
  detail::check_marginal(b, "b");
  using std::exp;
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  const VectorX<Scalar> la = detail::safe_log(a);
  const VectorX<Scalar> lb = detail::safe_log(b);
  const MatrixX<Scalar> scaled = cost / lambda;

  SinkhornResultT<Scalar> res;
  VectorX<Scalar> phi = VectorX<Scalar>::Zero(n);
  VectorX<Scalar> psi = VectorX<Scalar>::Zero(m);
  VectorX<Scalar> row_buf(m);
  VectorX<Scalar> col_buf(n);
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  int it = 0;
  const bool may_polish = opt.newton_after > 0 && n + m <= opt.newton_max_size;
  const int scaling_cap = may_polish ? std::min(opt.max_iter, opt.newton_after) : opt.max_iter;
  while (it < scaling_cap) {
    ++it;
    for (Eigen::Index i = 0; i < n; ++i) {
      row_buf = lb - psi / lambda - scaled.row(i).transpose();
      phi(i) = -lambda * detail::log_sum_exp(row_buf);
    }
    // Column marginal of the current plan, in log space.
    Scalar l1 = 0;
    residual = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      col_buf = la + phi / lambda - scaled.col(j);
      const Scalar lse = detail::log_sum_exp(col_buf);
      // Column sum equals b_j exp((lse - psi_j / lambda)).
      using std::abs;
      const Scalar colsum = exp(lb(j) + lse - psi(j) / lambda);
      const Scalar viol = abs(colsum - b(j));
      l1 += viol;
      residual = std::max(residual, viol);
      psi(j) = lambda * lse;
    }
    if (opt.record_history) res.history.push_back(l1);
    if (residual <= Scalar(opt.tol)) break;
  }
  if (residual > Scalar(opt.tol) && may_polish) {
    residual = detail::dual_newton(scaled, la, lb, lambda, phi, psi, Scalar(opt.tol), opt.newton_max_steps, it);
  }
  // Leave the potentials in the row-exact state so the returned plan has exact
  // row sums and column sums within the reported residual.
  for (Eigen::Index i = 0; i < n; ++i) {
    row_buf = lb - psi / lambda - scaled.row(i).transpose();
    phi(i) = -lambda * detail::log_sum_exp(row_buf);
  }
  res.potentials = {phi, psi, lambda};
  res.coupling = {gibbs_plan<Scalar>(cost, a, b, res.potentials), a, b};
  res.iterations = it;
  res.residual = res.coupling.marginal_violation();
  if (residual > Scalar(opt.tol) && res.residual > Scalar(opt.tol)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", static_cast<double>(res.residual));
    throw ConvergenceError("sinkhorn: no convergence after " + std::to_string(it) +
                               " iterations (residual " + buf + ")",
                           static_cast<double>(res.residual));
  }
  return res;
}

template <typename Scalar>
SinkhornResultT<Scalar> sinkhorn(const MatrixX<Scalar>& cost, const SampleBatchT<Scalar>& p,
                                 const SampleBatchT<Scalar>& q, Scalar lambda,
                                 const SinkhornOptions& opt = {}) {
  return sinkhorn<Scalar>(cost, p.weights, q.weights, lambda, opt);
}

// Shannon entropy with 0 log 0 = 0.
template <typename Derived>
typename Derived::Scalar shannon_entropy(const Eigen::DenseBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  using std::log;
  Scalar h = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const Scalar v = p(i, j);
      if (v > Scalar(0)) h -= v * log(v);
    }
  }
  return h;
}

enum class EntropyVariant {
  ShannonJoint,  // <pi, C> - lambda H(pi)
  KLtoProduct,   // <pi, C> + lambda KL(pi || a b^T)
};

template <typename Scalar>
Scalar entropic_objective(const CouplingT<Scalar>& pi, const MatrixX<Scalar>& cost, Scalar lambda,
                          EntropyVariant variant) {
  using std::log;
  const Scalar transport = (pi.plan.array() * cost.array()).sum();
  if (variant == EntropyVariant::ShannonJoint) return transport - lambda * shannon_entropy(pi.plan);
  Scalar kl = 0;
  for (Eigen::Index i = 0; i < pi.plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < pi.plan.cols(); ++j) {
      const Scalar v = pi.plan(i, j);
      if (v > Scalar(0)) kl += v * log(v / (pi.a(i) * pi.b(j)));
    }
  }
  return transport + lambda * kl;
}

// W_{l,lambda}(P, Q): the KL-to-product objective at the Sinkhorn optimum.
template <typename Scalar>
Scalar entropic_ot_value(const SampleBatchT<Scalar>& p, const SampleBatchT<Scalar>& q,
                         LossKind loss, Scalar lambda, const SinkhornOptions& opt = {}) {
  const MatrixX<Scalar> c = cost_matrix(loss, p, q);
  const auto res = sinkhorn<Scalar>(c, p.weights, q.weights, lambda, opt);
  return entropic_objective<Scalar>(res.coupling, c, lambda, EntropyVariant::KLtoProduct);
}

// Debiased loss 2 W(P,Q) - W(P,P) - W(Q,Q).
template <typename Scalar>
Scalar sinkhorn_loss(const SampleBatchT<Scalar>& p, const SampleBatchT<Scalar>& q, LossKind loss,
                     Scalar lambda, const SinkhornOptions& opt = {}) {
  return Scalar(2) * entropic_ot_value(p, q, loss, lambda, opt) -
         entropic_ot_value(p, p, loss, lambda, opt) - entropic_ot_value(q, q, loss, lambda, opt);
}

template <typename Scalar>
struct OracleResultT {
  CouplingT<Scalar> coupling;
  int iterations = 0;
  Scalar decrement{};  // final Newton decrement lambda(x)^2 / 2
};

// Reference solver for small instances, independent of the Sinkhorn scaling
// iterations: feasible-start equality-constrained Newton on the primal
//   min <pi, C> + lambda KL(pi || a b^T)  s.t.  pi 1 = a, pi^T 1 = b,
// restricted to the support of a and b. Each step solves the KKT system via
// the Schur complement on the (n + m - 1) independent marginal constraints and
// keeps pi strictly positive by fraction-to-boundary backtracking.
template <typename Scalar>
OracleResultT<Scalar> brute_force_entropic_ot(const MatrixX<Scalar>& cost, const VectorX<Scalar>& a,
                                              const VectorX<Scalar>& b, Scalar lambda,
                                              int max_iter = 500) {
  if (!(lambda > Scalar(0))) throw InvalidArgument("brute_force_entropic_ot: lambda must be positive");
  if (cost.rows() * cost.cols() > 64) {
    throw InvalidArgument("brute_force_entropic_ot: instance larger than 64 entries");
  }
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw ShapeError("brute_force_entropic_ot: marginal sizes do not match the cost matrix");
  }
  detail::check_marginal(a, "a");
  detail::check_marginal(b, "b");
  using std::log;

  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) > Scalar(0)) rows.push_back(i);
  }
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if (b(j) > Scalar(0)) cols.push_back(j);
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index m = static_cast<Eigen::Index>(cols.size());
  const Eigen::Index nv = n * m;
  const Eigen::Index nc = n + m - 1;

  // Variable k = i * m + j on the support.
  VectorX<Scalar> x(nv), c(nv), logab(nv);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const Scalar ai = a(rows[i]);
      const Scalar bj = b(cols[j]);
      x(i * m + j) = ai * bj;
      c(i * m + j) = cost(rows[i], cols[j]);
      logab(i * m + j) = log(ai) + log(bj);
    }
  }
  MatrixX<Scalar> A = MatrixX<Scalar>::Zero(nc, nv);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      A(i, i * m + j) = 1;
      if (j + 1 < m) A(n + j, i * m + j) = 1;
    }
  }
  auto objective = [&](const VectorX<Scalar>& v) {
    Scalar f = 0;
    for (Eigen::Index k = 0; k < nv; ++k) f += v(k) * c(k) + lambda * v(k) * (log(v(k)) - logab(k));
    return f;
  };

  OracleResultT<Scalar> res;
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  Scalar f = objective(x);
  int it = 0;
  for (; it < max_iter; ++it) {
    VectorX<Scalar> g(nv), hinv(nv);
    for (Eigen::Index k = 0; k < nv; ++k) {
      g(k) = c(k) + lambda * (log(x(k)) + Scalar(1) - logab(k));
      hinv(k) = x(k) / lambda;
    }
    const MatrixX<Scalar> ah = A * hinv.asDiagonal();
    const MatrixX<Scalar> schur = ah * A.transpose();
    const VectorX<Scalar> nu = schur.ldlt().solve(-(ah * g));
    const VectorX<Scalar> dx = -(hinv.array() * (g + A.transpose() * nu).array()).matrix();
    const Scalar decrement = -g.dot(dx) / Scalar(2);
    res.decrement = decrement;
    if (decrement <= Scalar(64) * eps * eps * std::max(Scalar(1), std::abs(f))) break;

    Scalar t = 1;
    for (Eigen::Index k = 0; k < nv; ++k) {
      if (dx(k) < Scalar(0)) t = std::min(t, Scalar(0.99) * x(k) / -dx(k));
    }
    VectorX<Scalar> trial = x + t * dx;
    Scalar ft = objective(trial);
    int backtracks = 0;
    while (ft > f - Scalar(0.25) * t * Scalar(2) * decrement && backtracks < 60) {
      t /= 2;
      trial = x + t * dx;
      ft = objective(trial);
      ++backtracks;
    }
    if (backtracks == 60) break;  // no further progress representable
    x = trial;
    f = ft;
  }
  res.iterations = it;
  MatrixX<Scalar> plan = MatrixX<Scalar>::Zero(cost.rows(), cost.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) plan(rows[i], cols[j]) = x(i * m + j);
  }
  res.coupling = {plan, a, b};
  return res;
}

}  // namespace egan

#endif  // EGAN_OT_CORE_HPP_
