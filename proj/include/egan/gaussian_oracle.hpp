#ifndef EGAN_GAUSSIAN_ORACLE_HPP_
#define EGAN_GAUSSIAN_ORACLE_HPP_

// Closed-form ground truth for the linear-Gaussian model
//   X ~ N(0, I_r),  Y | X = x ~ N(G x + c, lambda I_d).
// Marginal: Y ~ N(c, G G^T + lambda I). Posterior: X | y ~ N(R (y - c), I - R G)
// with R = G^T (G G^T + lambda I)^{-1}.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

#include "egan/ot_core.hpp"
#include "egan/types.hpp"

namespace egan {

struct ConditionalLatentPosterior;

template <typename Scalar>
class LinearGaussianOracleT {
 public:
  LinearGaussianOracleT(MatrixX<Scalar> g, Scalar lambda)
      : LinearGaussianOracleT(std::move(g), lambda, VectorX<Scalar>()) {}

  LinearGaussianOracleT(MatrixX<Scalar> g, Scalar lambda, VectorX<Scalar> offset)
      : g_(std::move(g)), lambda_(lambda), offset_(std::move(offset)) {
    if (!(lambda_ > Scalar(0))) throw InvalidArgument("LinearGaussianOracle: lambda must be positive");
    if (offset_.size() == 0) offset_ = VectorX<Scalar>::Zero(g_.rows());
    if (offset_.size() != g_.rows()) throw ShapeError("LinearGaussianOracle: offset length != d");
    const Eigen::Index r = g_.cols();
    MatrixX<Scalar> marginal = g_ * g_.transpose();
    marginal.diagonal().array() += lambda_;
    marginal_cov_ = marginal;
    marginal_llt_.compute(marginal);
    if (marginal_llt_.info() != Eigen::Success) {
      // lambda > 0 bounds the spectrum away from zero, so this only triggers
      // on rounding trouble.
      jitter_ = Scalar(1e-12);
      marginal.diagonal().array() += jitter_;
      marginal_llt_.compute(marginal);
      if (marginal_llt_.info() != Eigen::Success) {
        throw NumericError("LinearGaussianOracle: marginal covariance is not positive definite");
      }
    }
    r_ = marginal_llt_.solve(g_).transpose();
    MatrixX<Scalar> post = MatrixX<Scalar>::Identity(r, r) - r_ * g_;
    post_cov_ = (post + post.transpose()) / Scalar(2);
    post_llt_.compute(post_cov_);
    if (post_llt_.info() == Eigen::Success) {
      log_det_post_ = Scalar(2) * post_llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }
    log_det_marginal_ = Scalar(2) * marginal_llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  const MatrixX<Scalar>& g() const { return g_; }
  Scalar lambda() const { return lambda_; }
  const VectorX<Scalar>& offset() const { return offset_; }
  const MatrixX<Scalar>& r() const { return r_; }
  const MatrixX<Scalar>& posterior_covariance() const { return post_cov_; }
  const MatrixX<Scalar>& marginal_covariance() const { return marginal_cov_; }
  Eigen::Index data_dim() const { return g_.rows(); }
  Eigen::Index latent_dim() const { return g_.cols(); }
  Scalar jitter() const { return jitter_; }

  Scalar log_det_marginal() const { return log_det_marginal_; }

  // Same determinant through the r x r matrix G^T G + lambda I.
  Scalar log_det_marginal_woodbury() const {
    const Eigen::Index d = g_.rows();
    const Eigen::Index r = g_.cols();
    MatrixX<Scalar> small = g_.transpose() * g_;
    small.diagonal().array() += lambda_;
    Eigen::LLT<MatrixX<Scalar>> llt(small);
    using std::log;
    return Scalar(d - r) * log(lambda_) +
           Scalar(2) * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  std::pair<VectorX<Scalar>, MatrixX<Scalar>> posterior(const VectorX<Scalar>& y) const {
    check_y(y);
    return {r_ * (y - offset_), post_cov_};
  }

  Scalar exact_log_likelihood(const VectorX<Scalar>& y) const {
    check_y(y);
    using std::log;
    const VectorX<Scalar> centered = y - offset_;
    const Scalar maha = marginal_llt_.matrixL().solve(centered).squaredNorm();
    const Scalar d = Scalar(g_.rows());
    return -Scalar(0.5) * (d * log(Scalar(2) * std::numbers::pi_v<Scalar>) + log_det_marginal_ + maha);
  }

  // log N(x; R (y - c), I - R G).
  Scalar log_posterior_density(const VectorX<Scalar>& x, const VectorX<Scalar>& y) const {
    if (post_llt_.info() != Eigen::Success) {
      throw NumericError("LinearGaussianOracle: posterior covariance is degenerate");
    }
    using std::log;
    const VectorX<Scalar> diff = x - r_ * (y - offset_);
    const Scalar maha = post_llt_.matrixL().solve(diff).squaredNorm();
    const Scalar r = Scalar(g_.cols());
    return -Scalar(0.5) * (r * log(Scalar(2) * std::numbers::pi_v<Scalar>) + log_det_post_ + maha);
  }

 private:
  void check_y(const VectorX<Scalar>& y) const {
    if (y.size() != g_.rows()) {
      throw ShapeError("LinearGaussianOracle: y has dimension " + std::to_string(y.size()) +
                       ", expected " + std::to_string(g_.rows()));
    }
  }

  MatrixX<Scalar> g_;
  Scalar lambda_;
  VectorX<Scalar> offset_;
  MatrixX<Scalar> r_;
  MatrixX<Scalar> post_cov_;
  MatrixX<Scalar> marginal_cov_;
  Eigen::LLT<MatrixX<Scalar>> marginal_llt_;
  Eigen::LLT<MatrixX<Scalar>> post_llt_;
  Scalar log_det_marginal_{};
  Scalar log_det_post_{};
  Scalar jitter_{};
};

using LinearGaussianOracle = LinearGaussianOracleT<double>;

// y_i = G x_i + c + sqrt(lambda) eps_i. Latents and noise are drawn per row,
// latent block first.
SampleBatch sample_data(const LinearGaussianOracle& oracle, Eigen::Index n, std::uint64_t seed);

struct GapEstimate {
  double kl = 0.0;
  double standard_error = 0.0;
};

// KL(P* || oracle posterior) from a weighted latent sample in snis form:
//   sum_i p_i [log P*(x_i) - log q(x_i)],  log P*(x) = log phi(x) + v/lambda - log Z.
GapEstimate approximation_gap(const LinearGaussianOracle& oracle, const Vector& y_test,
                              const ConditionalLatentPosterior& posterior);

}  // namespace egan

#endif  // EGAN_GAUSSIAN_ORACLE_HPP_
