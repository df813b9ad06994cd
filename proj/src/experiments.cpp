#include "egan/experiments.hpp"

#include <cmath>
#include <limits>

#include "egan/coupling_inference.hpp"
#include "egan/random.hpp"

namespace egan {

namespace {

void say(const ProgressFn& progress, const std::string& msg) {
  if (progress) progress(msg);
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TrainedSetup {
  LinearGaussianOracle truth;
  SampleBatch data;
  SampleBatch test;
  std::optional<EntropicGanModel> model;
};

// Shared front half of both tightness tables: data, training, refinement.
TrainedSetup train_for_tightness(const TightnessConfig& config, int dim, Activation activation,
                                 const char* label, const ProgressFn& progress) {
  const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(dim));
  GenDataConfig g;
  g.dim = dim;
  g.latent_dim = dim;
  g.samples = config.train_size;
  g.lambda = config.lambda;
  g.seed = seed;
  LinearGaussianOracle truth = random_linear_gaussian(g);
  SampleBatch data = generate_data(truth, g);
  SampleBatch test = sample_data(truth, config.test_samples, derive_seed(seed, 2));
  TrainedSetup s{truth, data, test, std::nullopt};

  TrainConfig tc = config.train;
  tc.lambda = config.lambda;
  tc.latent_dim = dim;
  tc.generator_activation = activation;
  tc.seed = derive_seed(seed, 3);
  say(progress, std::string(label) + " d=" + std::to_string(dim) + ": training " +
                    std::to_string(tc.iterations) + " iterations");
  auto [model, log] = train(tc, s.data);
  (void)log;
  TrainConfig rc = tc;
  rc.discriminator_optimizer.learning_rate = config.refine_learning_rate;
  say(progress, std::string(label) + " d=" + std::to_string(dim) + ": refining discriminators for " +
                    std::to_string(config.refine_steps) + " steps");
  s.model = refine_discriminators(model, s.data, config.refine_steps, rc);
  return s;
}

}  // namespace

LinearGaussianOracle random_linear_gaussian(const GenDataConfig& config) {
  if (config.dim <= 0 || config.latent_dim <= 0) throw InvalidArgument("gen-data: dimensions must be positive");
  Rng rng(derive_seed(config.seed, 0));
  const Matrix g = rng.normal_matrix(config.dim, config.latent_dim) / std::sqrt(static_cast<double>(config.latent_dim));
  return LinearGaussianOracle(g, config.lambda, Vector::Constant(config.dim, config.offset));
}

SampleBatch generate_data(const LinearGaussianOracle& oracle, const GenDataConfig& config) {
  return sample_data(oracle, config.samples, derive_seed(config.seed, 1));
}

TrainConfig experiment_train_config() {
  TrainConfig c;
  c.generator_optimizer.learning_rate = 2e-4;
  c.discriminator_optimizer.learning_rate = 2e-4;
  c.iterations = 1000;
  return c;
}

TightnessConfig default_table1_config() {
  TightnessConfig c;
  c.dims = {2, 5, 10};
  return c;
}

TightnessConfig default_table2_config() {
  TightnessConfig c;
  c.dims = {5, 10};
  c.posterior_samples = 20000;
  c.refine_steps = 300;
  return c;
}

Table1Row run_table1_dim(const TightnessConfig& config, int dim, const ProgressFn& progress) {
  Table1Row row;
  row.dim = dim;
  std::optional<TrainedSetup> s;
  try {
    s = train_for_tightness(config, dim, Activation::Identity, "table1", progress);
  } catch (const TrainingDiverged& e) {
    row.status = "diverged";
    row.gap = row.gap_se = row.surrogate = row.surrogate_se = row.elbo = row.exact = kNaN;
    row.iterations = e.iteration();
    say(progress, std::string("table1 d=") + std::to_string(dim) + ": " + e.what());
    return row;
  }
  const EntropicGanModel& model = *s->model;
  row.iterations = model.iterations;
  // Latent rotations leave the generated distribution unchanged, so the gap is
  // measured against the explicit model of the generator actually learned.
  const AffineMap learned_map = collapse_linear(model.generator);
  const LinearGaussianOracle learned(learned_map.matrix, model.lambda, learned_map.offset);
  const PotentialModel pv = potential_view(model);
  const double m = static_cast<double>(model.train_size);
  const double c_paper = corollary1_constant(dim, dim, m, model.lambda, ConstantMode::Paper, model.loss);
  const double c_sample = corollary1_constant(dim, dim, m, model.lambda, ConstantMode::Sample, model.loss);
  const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(dim));
  const Eigen::Index n = s->test.size();
  say(progress, "table1 d=" + std::to_string(dim) + ": scoring " + std::to_string(n) + " test points");
  double gap = 0, gap_var = 0, sur = 0, sur_var = 0, elbo = 0, exact = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector y = s->test.points.row(i).transpose();
    const std::uint64_t si = derive_seed(seed, 100000 + static_cast<std::uint64_t>(i));
    const auto snis = latent_posterior(y, pv, config.posterior_samples, si, WeightMode::Snis);
    const GapEstimate g = approximation_gap(learned, y, snis);
    gap += g.kl;
    gap_var += g.standard_error * g.standard_error;
    elbo += surrogate_from_posterior(snis, EntropyMode::Differential, c_sample).total;
    const auto alg = latent_posterior(y, pv, config.posterior_samples, si, WeightMode::Algorithm1);
    const auto rep = surrogate_from_posterior(alg, EntropyMode::Algorithm1, c_paper);
    sur += rep.total;
    sur_var += rep.standard_error * rep.standard_error;
    exact += s->truth.exact_log_likelihood(y);
  }
  const double dn = static_cast<double>(n);
  row.gap = gap / dn;
  row.gap_se = std::sqrt(gap_var) / dn;
  row.surrogate = sur / dn;
  row.surrogate_se = std::sqrt(sur_var) / dn;
  row.elbo = elbo / dn;
  row.exact = exact / dn;
  return row;
}

Table2Row run_table2_dim(const TightnessConfig& config, int dim, const ProgressFn& progress) {
  Table2Row row;
  row.dim = dim;
  std::optional<TrainedSetup> s;
  try {
    s = train_for_tightness(config, dim, Activation::LeakyRelu, "table2", progress);
  } catch (const TrainingDiverged& e) {
    row.status = "diverged";
    row.exact = row.surrogate = row.surrogate_se = row.relative_gap = kNaN;
    row.iterations = e.iteration();
    say(progress, std::string("table2 d=") + std::to_string(dim) + ": " + e.what());
    return row;
  }
  const EntropicGanModel& model = *s->model;
  row.iterations = model.iterations;
  const PotentialModel pv = potential_view(model);
  LikelihoodOptions o;
  o.samples = config.posterior_samples;
  o.weight_mode = WeightMode::Snis;
  o.entropy_mode = EntropyMode::Differential;
  o.constant_mode = ConstantMode::Sample;
  const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(dim));
  const Eigen::Index n = s->test.size();
  say(progress, "table2 d=" + std::to_string(dim) + ": scoring " + std::to_string(n) + " test points");
  double sur = 0, var = 0, exact = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector y = s->test.points.row(i).transpose();
    o.seed = derive_seed(seed, 100000 + static_cast<std::uint64_t>(i));
    const auto rep = surrogate_log_likelihood(y, pv, o);
    sur += rep.total;
    var += rep.standard_error * rep.standard_error;
    exact += s->truth.exact_log_likelihood(y);
  }
  const double dn = static_cast<double>(n);
  row.exact = exact / dn;
  row.surrogate = sur / dn;
  row.surrogate_se = std::sqrt(var) / dn;
  row.relative_gap = std::abs(row.exact - row.surrogate) / std::abs(row.exact);
  return row;
}

EvolutionConfig default_evolution_config() {
  EvolutionConfig c;
  c.train.iterations = 1000;
  c.train.checkpoint_interval = 100;
  c.likelihood.samples = 1000;
  c.likelihood.weight_mode = WeightMode::Algorithm1;
  c.likelihood.entropy_mode = EntropyMode::Algorithm1;
  c.likelihood.constant_mode = ConstantMode::None;
  return c;
}

std::vector<EvolutionCheckpoint> run_evolution(const EvolutionConfig& config, const ProgressFn& progress) {
  GenDataConfig g;
  g.dim = config.dim;
  g.latent_dim = config.dim;
  g.samples = config.train_size;
  g.lambda = config.lambda;
  g.offset = config.offset;
  g.seed = config.seed;
  const LinearGaussianOracle truth = random_linear_gaussian(g);
  const SampleBatch data = generate_data(truth, g);
  const SampleBatch heldout = sample_data(truth, config.heldout, derive_seed(config.seed, 2));

  TrainConfig tc = config.train;
  tc.lambda = config.lambda;
  tc.latent_dim = config.dim;
  tc.seed = derive_seed(config.seed, 3);
  LikelihoodOptions lo = config.likelihood;
  lo.seed = derive_seed(config.seed, 4);

  std::vector<EvolutionCheckpoint> out;
  auto on_checkpoint = [&](const EntropicGanModel& model, std::int64_t iteration) {
    say(progress, "evolution: checkpoint at iteration " + std::to_string(iteration));
    const EntropicGanModel refined = refine_discriminators(model, data, config.refine_steps, tc);
    const PotentialModel pv = potential_view(refined);
    std::vector<double> totals;
    for (const auto& r : score_samples(heldout.points, pv, lo)) totals.push_back(r.total);
    EvolutionCheckpoint cp;
    cp.iteration = iteration;
    cp.median = median(totals);
    double s = 0;
    for (double t : totals) s += t;
    cp.mean = s / static_cast<double>(totals.size());
    cp.histogram = histogram(totals, config.bins, config.range);
    out.push_back(std::move(cp));
  };
  train(tc, data, on_checkpoint);
  return out;
}

std::vector<SinkhornCheckRow> run_sinkhorn_check(const SinkhornCheckConfig& config) {
  if (config.instances < 0 || config.max_size < 1 || config.lambdas.empty()) {
    throw InvalidArgument("sinkhorn-check: need max_size >= 1 and at least one lambda");
  }
  Rng rng(config.seed);
  auto random_batch = [&rng](Eigen::Index n) {
    Matrix pts = rng.normal_matrix(n, 2);
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = 0.1 + rng.uniform();
    w /= w.sum();
    return SampleBatch(pts, w);
  };
  std::vector<SinkhornCheckRow> rows;
  for (int k = 0; k < config.instances; ++k) {
    SinkhornCheckRow r;
    r.instance = k;
    r.same = k % 5 == 4;
    r.lambda = config.lambdas[static_cast<std::size_t>(k) % config.lambdas.size()];
    const auto max_n = static_cast<std::uint64_t>(config.max_size);
    r.n = 1 + static_cast<Eigen::Index>(rng.below(max_n));
    const SampleBatch p = random_batch(r.n);
    const SampleBatch q = r.same ? p : random_batch(1 + static_cast<Eigen::Index>(rng.below(max_n)));
    r.m = q.size();

    const LossKind loss = LossKind::HalfSquaredL2;
    const double w_pq = entropic_ot_value(p, q, loss, r.lambda);
    const double w_pp = entropic_ot_value(p, p, loss, r.lambda);
    const double w_qq = entropic_ot_value(q, q, loss, r.lambda);
    r.two_w = 2.0 * w_pq;
    r.sinkhorn_loss = r.two_w - w_pp - w_qq;
    r.entropy_bound = r.lambda * (shannon_entropy(p.weights) + shannon_entropy(q.weights));
    const double tol = 1e-9 * std::max(1.0, std::abs(r.two_w));
    r.sandwich = r.sinkhorn_loss <= r.two_w + tol && r.two_w <= r.sinkhorn_loss + r.entropy_bound + tol;

    const Matrix c = cost_matrix(loss, p, q);
    const auto sk = sinkhorn(c, p.weights, q.weights, r.lambda);
    const auto oracle = brute_force_entropic_ot(c, p.weights, q.weights, r.lambda);
    r.max_coupling_error = (sk.coupling.plan - oracle.coupling.plan).cwiseAbs().maxCoeff();
    rows.push_back(r);
  }
  return rows;
}

}  // namespace egan
