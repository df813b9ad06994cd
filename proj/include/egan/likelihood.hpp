#ifndef EGAN_LIKELIHOOD_HPP_
#define EGAN_LIKELIHOOD_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "egan/coupling_inference.hpp"
#include "egan/entropic_gan.hpp"
#include "egan/ot_core.hpp"
#include "egan/types.hpp"

namespace egan {

enum class EntropyMode {
  Algorithm1,    // -sum p_i log p_i over the weights
  Differential,  // -sum p_i log P*(x_i), a density estimate
};

// Additive constant of the bound.
//   paper:       -log m + log C - r/2 - log(2 pi)/2
//   dimensional: -log m + log C - r/2 - (r/2) log(2 pi)
//   sample:      log C - (r/2) log(2 pi), the per-sample identity
//   none:        0
// with log C the log normalizer of exp(-l / lambda).
enum class ConstantMode { Paper, Dimensional, Sample, None };

const char* entropy_mode_name(EntropyMode m);
EntropyMode parse_entropy_mode(const std::string& s);
const char* constant_mode_name(ConstantMode m);
ConstantMode parse_constant_mode(const std::string& s);

// log C with C^{-1} = integral of exp(-l(z) / lambda) over R^d.
double log_normalizer(LossKind loss, int d, double lambda);

double corollary1_constant(int d, int r, double m, double lambda, ConstantMode mode,
                           LossKind loss = LossKind::HalfSquaredL2);

struct SurrogateLikelihoodReport {
  double cost = 0.0;      // -(1/lambda) sum p_i l_i
  double entropy = 0.0;
  double prior = 0.0;     // -sum p_i ||x_i||^2 / 2
  double constant = 0.0;
  double total = 0.0;
  double standard_error = 0.0;
  Eigen::Index samples = 0;
  WeightMode weight_mode = WeightMode::Algorithm1;
  EntropyMode entropy_mode = EntropyMode::Algorithm1;
  ConstantMode constant_mode = ConstantMode::Dimensional;
};

struct LikelihoodOptions {
  Eigen::Index samples = 10000;
  std::uint64_t seed = 0;
  WeightMode weight_mode = WeightMode::Algorithm1;
  EntropyMode entropy_mode = EntropyMode::Algorithm1;
  ConstantMode constant_mode = ConstantMode::Dimensional;
};

// Bound terms from an already weighted latent sample. The standard error is
// the delta-method estimate for self-normalized weights.
SurrogateLikelihoodReport surrogate_from_posterior(const ConditionalLatentPosterior& posterior,
                                                   EntropyMode entropy, double constant);

SurrogateLikelihoodReport surrogate_log_likelihood(const Vector& y, const PotentialModel& model,
                                                   const LikelihoodOptions& options);
SurrogateLikelihoodReport surrogate_log_likelihood(const Vector& y, const EntropicGanModel& model,
                                                   const LikelihoodOptions& options);

// One report per row; row i uses seed derive_seed(options.seed, i).
std::vector<SurrogateLikelihoodReport> score_samples(const Matrix& data, const PotentialModel& model,
                                                     const LikelihoodOptions& options);

// Mean per-sample surrogate over the dataset.
double theorem1_average_bound(const SampleBatch& data, const PotentialModel& model,
                              const LikelihoodOptions& options);
double theorem1_average_bound(const SampleBatch& data, const EntropicGanModel& model,
                              const LikelihoodOptions& options);

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  std::int64_t count = 0;
};

// Equal-width bins over [range.first, range.second]; values outside the range
// land in the edge bins. Without a range, spans the data (a degenerate span is
// widened to one unit around the value).
std::vector<HistogramBin> histogram(const std::vector<double>& values, int bins,
                                    std::optional<std::pair<double, double>> range = std::nullopt);

std::vector<HistogramBin> likelihood_histogram(const SampleBatch& samples, const PotentialModel& model,
                                               int bins, std::optional<std::pair<double, double>> range,
                                               const LikelihoodOptions& options);

double median(std::vector<double> values);

}  // namespace egan

#endif  // EGAN_LIKELIHOOD_HPP_
