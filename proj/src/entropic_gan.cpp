#include "egan/entropic_gan.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "egan/random.hpp"

namespace egan {

void EntropicGanModel::validate() const {
  if (!(lambda > 0.0)) throw InvalidArgument("model: lambda must be positive");
  if (generator.spec.input_width() != latent_dim) {
    throw ShapeError("model: generator input width != latent dimension");
  }
  if (generator.spec.output_width() != data_dim || d1.spec.input_width() != data_dim ||
      d2.spec.input_width() != data_dim) {
    throw ShapeError("model: generator output and discriminator inputs must equal the data dimension");
  }
  if (d1.spec.output_width() != 1 || d2.spec.output_width() != 1) {
    throw ShapeError("model: discriminators must be scalar-valued");
  }
}

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw InvalidArgument("train: lambda must be positive");
  if (latent_dim <= 0 || batch_size <= 0 || critic_steps < 0 || iterations < 0 ||
      checkpoint_interval <= 0) {
    throw InvalidArgument("train: counts must be positive");
  }
  if (!(generator_optimizer.learning_rate > 0.0) || !(discriminator_optimizer.learning_rate > 0.0)) {
    throw InvalidArgument("train: learning rates must be positive");
  }
}

EntropicGanModel init_model(const TrainConfig& config, int data_dim, std::int64_t train_size) {
  config.validate();
  EntropicGanModel m;
  m.lambda = config.lambda;
  m.loss = config.loss;
  m.latent_dim = config.latent_dim;
  m.data_dim = data_dim;
  m.train_size = train_size;
  m.seed = config.seed;

  std::vector<int> gw{config.latent_dim};
  gw.insert(gw.end(), config.generator_hidden.begin(), config.generator_hidden.end());
  gw.push_back(data_dim);
  std::vector<int> dw{data_dim};
  dw.insert(dw.end(), config.discriminator_hidden.begin(), config.discriminator_hidden.end());
  dw.push_back(1);

  m.generator = init_params(MlpSpec::uniform(gw, config.generator_activation), derive_seed(config.seed, 0));
  m.d1 = init_params(MlpSpec::uniform(dw, Activation::LeakyRelu), derive_seed(config.seed, 1));
  m.d2 = init_params(MlpSpec::uniform(dw, Activation::LeakyRelu), derive_seed(config.seed, 2));
  return m;
}

Var pairwise_loss(LossKind loss, Var y, Var yhat) {
  Tape& t = *y.tape;
  const Eigen::Index n = y.rows();
  const Eigen::Index m = yhat.rows();
  if (loss == LossKind::HalfSquaredL2) {
    Var sy = t.sum(t.square(y), Axis::Rows);
    Var sh = t.sum(t.square(yhat), Axis::Rows);
    Var cross = t.affine(y, yhat);
    const std::pair<double, Var> terms[] = {
        {0.5, broadcast_cols(sy, m)}, {0.5, broadcast_rows(sh, n)}, {-1.0, cross}};
    return t.lincomb(terms);
  }
  // The expanded form above can round slightly below zero, so the norm sums
  // per-coordinate squared differences, which vanish exactly for coincident
  // points. The tiny offset keeps the log finite there; the gradient through
  // it is multiplied by an exactly zero difference.
  std::vector<std::pair<double, Var>> sq;
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    Tensor e = Tensor::Zero(1, y.cols());
    e(0, k) = 1.0;
    Var pick = t.fixed(e);
    const std::pair<double, Var> diff[] = {{1.0, broadcast_cols(t.affine(y, pick), m)},
                                           {-1.0, broadcast_rows(t.affine(yhat, pick), n)}};
    sq.emplace_back(1.0, t.square(t.lincomb(diff)));
  }
  return t.exp(0.5 * t.log(t.lincomb(sq, 1e-300)));
}

double violation(const Vector& y, const Vector& yhat, const EntropicGanModel& model) {
  if (y.size() != model.data_dim || yhat.size() != model.data_dim) {
    throw ShapeError("violation: points must have dimension " + std::to_string(model.data_dim));
  }
  const double d1 = mlp_forward(model.d1, y.transpose())(0, 0);
  const double d2 = mlp_forward(model.d2, yhat.transpose())(0, 0);
  return d1 - d2 - loss_of_difference(model.loss, (y - yhat).eval());
}

DualObjectiveGraph::DualObjectiveGraph(const EntropicGanModel& shape, Eigen::Index real_batch,
                                       Eigen::Index fake_batch, Wrt wrt)
    : tape_(std::make_unique<Tape>()), wrt_(wrt) {
  shape.validate();
  if (real_batch <= 0 || fake_batch <= 0) throw InvalidArgument("dual objective: empty batch");
  Tape& t = *tape_;
  const bool disc = wrt != Wrt::Generator;
  const bool gen = wrt != Wrt::Discriminators;
  gen_ = declare_mlp(t, shape.generator.spec, gen, "generator");
  d1_ = declare_mlp(t, shape.d1.spec, disc, "d1");
  d2_ = declare_mlp(t, shape.d2.spec, disc, "d2");
  y_ = t.constant(real_batch, shape.data_dim, "y");
  x_ = t.constant(fake_batch, shape.latent_dim, "latent");

  const double lambda = shape.lambda;
  Var yhat = mlp_forward(gen_, x_);
  Var d1y = mlp_forward(d1_, y_);
  Var d2f = mlp_forward(d2_, yhat);
  Var cost = pairwise_loss(shape.loss, y_, yhat);
  const std::pair<double, Var> vt[] = {
      {1.0, broadcast_cols(d1y, fake_batch)}, {-1.0, broadcast_rows(d2f, real_batch)}, {-1.0, cost}};
  v_ = t.lincomb(vt);
  Var lse = t.log_sum_exp((1.0 / lambda) * v_);
  const double shift =
      std::log(lambda) - std::log(static_cast<double>(real_batch) * static_cast<double>(fake_batch));
  Var penalty = t.exp(lse + shift);
  const std::pair<double, Var> ot[] = {{1.0, t.mean(d1y)}, {-1.0, t.mean(d2f)}, {-1.0, penalty}};
  objective_ = t.lincomb(ot);
  t.set_output(objective_);
}

double DualObjectiveGraph::evaluate(const EntropicGanModel& model, const Matrix& y,
                                    const Matrix& latents) {
  Tape& t = *tape_;
  gen_.assign(t, model.generator);
  d1_.assign(t, model.d1);
  d2_.assign(t, model.d2);
  t.set(y_, y);
  t.set(x_, latents);
  return t.forward()(0, 0);
}

void DualObjectiveGraph::backward() {
  Tape& t = *tape_;
  t.backward();
  auto collect = [&t](const MlpVars& net, std::vector<Tensor>& out) {
    out.clear();
    for (Var v : net.vars()) out.push_back(t.grad(v));
  };
  if (wrt_ != Wrt::Discriminators) collect(gen_, g_grads_);
  if (wrt_ != Wrt::Generator) {
    collect(d1_, d1_grads_);
    collect(d2_, d2_grads_);
  }
}

double DualObjectiveGraph::mean_violation() const { return tape_->value(v_).mean(); }

std::vector<Tensor> DualObjectiveGraph::leaf_values() const {
  std::vector<Tensor> out;
  for (int id : tape_->leaves()) out.push_back(tape_->value(Var{tape_.get(), id}));
  return out;
}

double dual_objective(const EntropicGanModel& model, const Matrix& y, const Matrix& latents) {
  DualObjectiveGraph g(model, y.rows(), latents.rows(), DualObjectiveGraph::Wrt::All);
  return g.evaluate(model, y, latents);
}

namespace {

// Minibatches drawn without replacement within a batch (partial Fisher-Yates
// over a persistent permutation), latents standard normal.
class BatchSampler {
 public:
  BatchSampler(const SampleBatch& data, std::uint64_t seed)
      : data_(data), rng_(seed), perm_(static_cast<std::size_t>(data.size())) {
    std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});
  }

  Matrix real(int batch) {
    const std::size_t n = perm_.size();
    Matrix out(batch, data_.dim());
    for (int k = 0; k < batch; ++k) {
      const std::size_t kk = static_cast<std::size_t>(k) % n;
      const std::size_t j = kk + static_cast<std::size_t>(rng_.below(n - kk));
      std::swap(perm_[kk], perm_[j]);
      out.row(k) = data_.points.row(perm_[kk]);
    }
    return out;
  }

  Matrix latents(int batch, int r) { return rng_.normal_matrix(batch, r); }

 private:
  const SampleBatch& data_;
  Rng rng_;
  std::vector<Eigen::Index> perm_;
};

double norm_of(const std::vector<Tensor>& ts) {
  double s = 0.0;
  for (const Tensor& t : ts) s += t.squaredNorm();
  return std::sqrt(s);
}

std::vector<Tensor> negated(const std::vector<Tensor>& ts) {
  std::vector<Tensor> out;
  out.reserve(ts.size());
  for (const Tensor& t : ts) out.push_back(-t);
  return out;
}

void check_data(const TrainConfig& config, const SampleBatch& data, const EntropicGanModel& model) {
  config.validate();
  if (data.dim() != model.data_dim) {
    throw ShapeError("train: data dimension " + std::to_string(data.dim()) + " != model dimension " +
                     std::to_string(model.data_dim));
  }
  if (data.size() < config.batch_size) {
    throw InvalidArgument("train: data has " + std::to_string(data.size()) +
                          " rows, fewer than the batch size " + std::to_string(config.batch_size));
  }
}

}  // namespace

TrainLog train_from(EntropicGanModel& model, const TrainConfig& config, const SampleBatch& data,
                    const CheckpointFn& on_checkpoint) {
  check_data(config, data, model);
  TrainLog log;
  if (config.iterations == 0) return log;

  const int batch = config.batch_size;
  DualObjectiveGraph critic(model, batch, batch, DualObjectiveGraph::Wrt::Discriminators);
  DualObjectiveGraph gen(model, batch, batch, DualObjectiveGraph::Wrt::Generator);
  OptimizerState opt_d1(config.discriminator_optimizer, model.d1);
  OptimizerState opt_d2(config.discriminator_optimizer, model.d2);
  OptimizerState opt_g(config.generator_optimizer, model.generator);
  BatchSampler sampler(data, derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(model.iterations)));

  EntropicGanModel last_good = model;
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t it = 1; it <= config.iterations; ++it) {
    TrainRecord rec;
    try {
      for (int k = 0; k < config.critic_steps; ++k) {
        critic.evaluate(model, sampler.real(batch), sampler.latents(batch, model.latent_dim));
        critic.backward();
        rec.discriminator_grad_norm =
            std::sqrt(std::pow(norm_of(critic.d1_grads()), 2) + std::pow(norm_of(critic.d2_grads()), 2));
        optimizer_step(opt_d1, model.d1, negated(critic.d1_grads()), "d1");
        optimizer_step(opt_d2, model.d2, negated(critic.d2_grads()), "d2");
      }
      rec.objective = gen.evaluate(model, sampler.real(batch), sampler.latents(batch, model.latent_dim));
      rec.mean_violation = gen.mean_violation();
      gen.backward();
      rec.generator_grad_norm = norm_of(gen.generator_grads());
      optimizer_step(opt_g, model.generator, gen.generator_grads(), "generator");
    } catch (const NumericError& e) {
      throw TrainingDiverged(std::string("training diverged at iteration ") +
                                 std::to_string(model.iterations + 1) + ": " + e.what(),
                             last_good, model.iterations + 1);
    }
    ++model.iterations;
    rec.iteration = model.iterations;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(rec);
    if (it % config.checkpoint_interval == 0 || it == config.iterations) {
      last_good = model;
      if (on_checkpoint) on_checkpoint(model, model.iterations);
    }
  }
  return log;
}

std::pair<EntropicGanModel, TrainLog> train(const TrainConfig& config, const SampleBatch& data,
                                            const CheckpointFn& on_checkpoint) {
  EntropicGanModel model = init_model(config, static_cast<int>(data.dim()), data.size());
  TrainLog log = train_from(model, config, data, on_checkpoint);
  return {std::move(model), std::move(log)};
}

EntropicGanModel refine_discriminators(const EntropicGanModel& model, const SampleBatch& data,
                                       int steps, const TrainConfig& config) {
  if (steps < 0) throw InvalidArgument("refine_discriminators: negative step count");
  EntropicGanModel out = model;
  if (steps == 0) return out;
  check_data(config, data, model);
  const int batch = config.batch_size;
  DualObjectiveGraph critic(out, batch, batch, DualObjectiveGraph::Wrt::Discriminators);
  OptimizerState opt_d1(config.discriminator_optimizer, out.d1);
  OptimizerState opt_d2(config.discriminator_optimizer, out.d2);
  BatchSampler sampler(data, derive_seed(config.seed, 500000 + static_cast<std::uint64_t>(out.iterations)));
  for (int k = 0; k < steps; ++k) {
    critic.evaluate(out, sampler.real(batch), sampler.latents(batch, out.latent_dim));
    critic.backward();
    optimizer_step(opt_d1, out.d1, negated(critic.d1_grads()), "d1");
    optimizer_step(opt_d2, out.d2, negated(critic.d2_grads()), "d2");
  }
  return out;
}

Var unrolled_entropic_ot(Var x, Var y, LossKind loss, double lambda, int iterations) {
  if (!(lambda > 0.0)) throw InvalidArgument("unrolled_entropic_ot: lambda must be positive");
  if (iterations < 0) throw InvalidArgument("unrolled_entropic_ot: negative iteration count");
  Tape& t = *x.tape;
  const Eigen::Index n = x.rows();
  const Eigen::Index m = y.rows();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  const double inv = 1.0 / lambda;
  Var cost = pairwise_loss(loss, x, y);     // n x m
  Var cost_t = pairwise_loss(loss, y, x);   // m x n

  // phi_i = -lambda LSE_j(log b_j - psi_j / lambda - C_ij / lambda), starting at psi = 0.
  Var phi = -lambda * t.log_sum_exp((-inv) * cost + log_b, Axis::Rows);
  Var psi{};
  for (int k = 0; k < iterations; ++k) {
    // psi_j = lambda LSE_i(log a_i + phi_i / lambda - C_ij / lambda)
    const std::pair<double, Var> pt[] = {{inv, broadcast_rows(phi, m)}, {-inv, cost_t}};
    psi = lambda * t.log_sum_exp(t.lincomb(pt, log_a), Axis::Rows);
    const std::pair<double, Var> ft[] = {{-inv, broadcast_rows(psi, n)}, {-inv, cost}};
    phi = -lambda * t.log_sum_exp(t.lincomb(ft, log_b), Axis::Rows);
  }
  // Rows are exact after the phi update, so the plan has unit mass and the
  // dual value reduces to <a, phi> - <b, psi>.
  if (iterations == 0) return t.mean(phi);
  return t.mean(phi) - t.mean(psi);
}

Var unrolled_sinkhorn_loss(Var x, Var y, LossKind loss, double lambda, int iterations) {
  const std::pair<double, Var> terms[] = {
      {2.0, unrolled_entropic_ot(x, y, loss, lambda, iterations)},
      {-1.0, unrolled_entropic_ot(x, x, loss, lambda, iterations)},
      {-1.0, unrolled_entropic_ot(y, y, loss, lambda, iterations)}};
  return x.tape->lincomb(terms);
}

std::pair<EntropicGanModel, TrainLog> sinkhorn_loss_train(const SinkhornTrainConfig& config,
                                                          const SampleBatch& data) {
  const TrainConfig& base = config.base;
  EntropicGanModel model = init_model(base, static_cast<int>(data.dim()), data.size());
  check_data(base, data, model);
  TrainLog log;
  if (base.iterations == 0) return {model, log};

  const int batch = base.batch_size;
  Tape tape;
  MlpVars gen = declare_mlp(tape, model.generator.spec, true, "generator");
  Var y = tape.constant(batch, model.data_dim, "y");
  Var x = tape.constant(batch, model.latent_dim, "latent");
  Var loss = unrolled_sinkhorn_loss(y, mlp_forward(gen, x), model.loss, model.lambda,
                                    config.sinkhorn_iterations);
  tape.set_output(loss);

  OptimizerState opt(base.generator_optimizer, model.generator);
  BatchSampler sampler(data, derive_seed(base.seed, 2000));
  const auto start = std::chrono::steady_clock::now();
  EntropicGanModel last_good = model;
  for (std::int64_t it = 1; it <= base.iterations; ++it) {
    TrainRecord rec;
    try {
      gen.assign(tape, model.generator);
      tape.set(y, sampler.real(batch));
      tape.set(x, sampler.latents(batch, model.latent_dim));
      rec.objective = tape.forward()(0, 0);
      tape.backward();
      std::vector<Tensor> grads;
      for (Var v : gen.vars()) grads.push_back(tape.grad(v));
      rec.generator_grad_norm = norm_of(grads);
      optimizer_step(opt, model.generator, grads, "generator");
    } catch (const NumericError& e) {
      throw TrainingDiverged(std::string("sinkhorn training diverged: ") + e.what(), last_good,
                             model.iterations + 1);
    }
    ++model.iterations;
    rec.iteration = model.iterations;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(rec);
    if (it % base.checkpoint_interval == 0) last_good = model;
  }
  return {model, log};
}

}  // namespace egan
