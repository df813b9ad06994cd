#include "egan/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "egan/random.hpp"

namespace egan {

const char* entropy_mode_name(EntropyMode m) {
  return m == EntropyMode::Algorithm1 ? "algorithm1" : "differential";
}

EntropyMode parse_entropy_mode(const std::string& s) {
  if (s == "algorithm1") return EntropyMode::Algorithm1;
  if (s == "differential") return EntropyMode::Differential;
  throw InvalidArgument("unknown entropy mode '" + s + "'");
}

const char* constant_mode_name(ConstantMode m) {
  switch (m) {
    case ConstantMode::Paper: return "paper";
    case ConstantMode::Dimensional: return "dimensional";
    case ConstantMode::Sample: return "sample";
    case ConstantMode::None: return "none";
  }
  return "?";
}

ConstantMode parse_constant_mode(const std::string& s) {
  if (s == "paper") return ConstantMode::Paper;
  if (s == "dimensional") return ConstantMode::Dimensional;
  if (s == "sample") return ConstantMode::Sample;
  if (s == "none" || s == "no-constant") return ConstantMode::None;
  throw InvalidArgument("unknown constant mode '" + s + "'");
}

double log_normalizer(LossKind loss, int d, double lambda) {
  if (d <= 0 || !(lambda > 0.0)) throw InvalidArgument("log_normalizer: need d > 0 and lambda > 0");
  const double dd = static_cast<double>(d);
  if (loss == LossKind::HalfSquaredL2) return -0.5 * dd * std::log(2.0 * std::numbers::pi * lambda);
  // integral of exp(-|z| / lambda) = surface(S^{d-1}) * Gamma(d) * lambda^d
  return -(dd * std::log(lambda) + std::log(2.0) + 0.5 * dd * std::log(std::numbers::pi) -
           std::lgamma(0.5 * dd) + std::lgamma(dd));
}

double corollary1_constant(int d, int r, double m, double lambda, ConstantMode mode, LossKind loss) {
  if (d <= 0 || r <= 0 || !(m > 0.0) || !(lambda > 0.0)) {
    throw InvalidArgument("corollary1_constant: arguments must be positive");
  }
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const double rr = static_cast<double>(r);
  const double log_c = log_normalizer(loss, d, lambda);
  switch (mode) {
    case ConstantMode::Paper: return -std::log(m) + log_c - 0.5 * rr - 0.5 * log_2pi;
    case ConstantMode::Dimensional: return -std::log(m) + log_c - 0.5 * rr - 0.5 * rr * log_2pi;
    case ConstantMode::Sample: return log_c - 0.5 * rr * log_2pi;
    case ConstantMode::None: return 0.0;
  }
  return 0.0;
}

SurrogateLikelihoodReport surrogate_from_posterior(const ConditionalLatentPosterior& post,
                                                   EntropyMode entropy, double constant) {
  const Eigen::Index n = post.size();
  const Vector& p = post.p;
  const Vector cost_i = -post.losses / post.lambda;
  const Vector prior_i = -0.5 * post.latents.rowwise().squaredNorm();
  Vector ent_i(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (entropy == EntropyMode::Algorithm1) {
      ent_i(i) = p(i) > 0.0 ? -std::log(p(i)) : 0.0;
    } else {
      ent_i(i) = -(post.log_prior(i) + post.violations(i) / post.lambda - post.log_z);
    }
  }
  SurrogateLikelihoodReport rep;
  rep.cost = p.dot(cost_i);
  rep.prior = p.dot(prior_i);
  // Zero-weight points contribute nothing, also when their log density is -inf.
  rep.entropy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p(i) > 0.0) rep.entropy += p(i) * ent_i(i);
  }
  rep.constant = constant;
  rep.total = rep.cost + rep.entropy + rep.prior + rep.constant;
  double var = 0.0;
  const double mean_h = rep.cost + rep.entropy + rep.prior;
  // The differential entropy carries +log Z, itself a sample estimate; its
  // influence term keeps the error from vanishing when h is constant.
  const Vector infl = entropy == EntropyMode::Differential ? detail::log_normalizer_influence(post)
                                                           : Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dev = p(i) > 0.0 ? p(i) * (cost_i(i) + ent_i(i) + prior_i(i) - mean_h) : 0.0;
    var += (dev + infl(i)) * (dev + infl(i));
  }
  rep.standard_error = std::sqrt(var);
  rep.samples = n;
  rep.weight_mode = post.mode;
  rep.entropy_mode = entropy;
  if (!std::isfinite(rep.total)) throw NumericError("surrogate likelihood is not finite");
  return rep;
}

SurrogateLikelihoodReport surrogate_log_likelihood(const Vector& y, const PotentialModel& model,
                                                   const LikelihoodOptions& options) {
  if (options.entropy_mode == EntropyMode::Algorithm1 && options.samples < 2) {
    throw InvalidArgument("surrogate_log_likelihood: entropy estimation needs at least 2 samples");
  }
  const ConditionalLatentPosterior post =
      latent_posterior(y, model, options.samples, options.seed, options.weight_mode);
  const double c = corollary1_constant(model.data_dim, model.latent_dim,
                                       static_cast<double>(model.train_size), model.lambda,
                                       options.constant_mode, model.loss);
  SurrogateLikelihoodReport rep = surrogate_from_posterior(post, options.entropy_mode, c);
  rep.constant_mode = options.constant_mode;
  return rep;
}

SurrogateLikelihoodReport surrogate_log_likelihood(const Vector& y, const EntropicGanModel& model,
                                                   const LikelihoodOptions& options) {
  return surrogate_log_likelihood(y, potential_view(model), options);
}

std::vector<SurrogateLikelihoodReport> score_samples(const Matrix& data, const PotentialModel& model,
                                                     const LikelihoodOptions& options) {
  std::vector<SurrogateLikelihoodReport> out;
  out.reserve(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    LikelihoodOptions o = options;
    o.seed = derive_seed(options.seed, static_cast<std::uint64_t>(i));
    out.push_back(surrogate_log_likelihood(data.row(i).transpose(), model, o));
  }
  return out;
}

double theorem1_average_bound(const SampleBatch& data, const PotentialModel& model,
                              const LikelihoodOptions& options) {
  if (data.size() == 0) throw InvalidArgument("theorem1_average_bound: empty dataset");
  double s = 0.0;
  for (const auto& r : score_samples(data.points, model, options)) s += r.total;
  return s / static_cast<double>(data.size());
}

double theorem1_average_bound(const SampleBatch& data, const EntropicGanModel& model,
                              const LikelihoodOptions& options) {
  return theorem1_average_bound(data, potential_view(model), options);
}

std::vector<HistogramBin> histogram(const std::vector<double>& values, int bins,
                                    std::optional<std::pair<double, double>> range) {
  if (bins < 1) throw InvalidArgument("histogram: need at least one bin");
  double lo = 0.0;
  double hi = 1.0;
  if (range) {
    lo = range->first;
    hi = range->second;
    if (!(hi > lo)) throw InvalidArgument("histogram: empty range");
  } else if (!values.empty()) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  const double width = (hi - lo) / bins;
  std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    out[k].low = lo + k * width;
    out[k].high = k + 1 == bins ? hi : lo + (k + 1) * width;
  }
  for (double v : values) {
    int k = static_cast<int>(std::floor((v - lo) / width));
    k = std::clamp(k, 0, bins - 1);
    ++out[k].count;
  }
  return out;
}

std::vector<HistogramBin> likelihood_histogram(const SampleBatch& samples, const PotentialModel& model,
                                               int bins, std::optional<std::pair<double, double>> range,
                                               const LikelihoodOptions& options) {
  std::vector<double> totals;
  for (const auto& r : score_samples(samples.points, model, options)) totals.push_back(r.total);
  return histogram(totals, bins, range);
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty list");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

}  // namespace egan
