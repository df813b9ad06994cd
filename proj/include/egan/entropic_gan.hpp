#ifndef EGAN_ENTROPIC_GAN_HPP_
#define EGAN_ENTROPIC_GAN_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "egan/grad_engine.hpp"
#include "egan/nets.hpp"
#include "egan/ot_core.hpp"
#include "egan/types.hpp"

namespace egan {

// Generator G: R^r -> R^d and the two dual potentials D1, D2: R^d -> R.
struct EntropicGanModel {
  MlpParams generator;
  MlpParams d1;
  MlpParams d2;
  double lambda = 0.1;
  LossKind loss = LossKind::HalfSquaredL2;
  int latent_dim = 0;
  int data_dim = 0;
  std::int64_t train_size = 0;
  std::uint64_t seed = 0;
  std::int64_t iterations = 0;

  void validate() const;
  bool operator==(const EntropicGanModel&) const = default;
};

struct TrainConfig {
  double lambda = 0.1;
  LossKind loss = LossKind::HalfSquaredL2;
  int latent_dim = 2;
  std::vector<int> generator_hidden = {128, 128};
  Activation generator_activation = Activation::Identity;
  std::vector<int> discriminator_hidden = {128, 128};
  OptimizerConfig generator_optimizer{OptimizerKind::Adam, 1e-6, 0.5, 0.999, 1e-8};
  OptimizerConfig discriminator_optimizer{OptimizerKind::Adam, 1e-6, 0.5, 0.999, 1e-8};
  int batch_size = 512;
  int critic_steps = 10;
  std::int64_t iterations = 1000;
  std::int64_t checkpoint_interval = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainRecord {
  std::int64_t iteration = 0;
  double objective = 0.0;
  double mean_violation = 0.0;
  double discriminator_grad_norm = 0.0;
  double generator_grad_norm = 0.0;
  double wall_seconds = 0.0;
};

using TrainLog = std::vector<TrainRecord>;

// Raised when training produces a non-finite objective; carries the most
// recent checkpoint (or the initial model if none was written yet).
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, EntropicGanModel last_good, std::int64_t iteration)
      : NumericError(what), last_good_(std::move(last_good)), iteration_(iteration) {}
  const char* kind() const noexcept override { return "diverged"; }
  const EntropicGanModel& last_good() const { return last_good_; }
  std::int64_t iteration() const { return iteration_; }

 private:
  EntropicGanModel last_good_;
  std::int64_t iteration_;
};

using CheckpointFn = std::function<void(const EntropicGanModel&, std::int64_t iteration)>;

EntropicGanModel init_model(const TrainConfig& config, int data_dim, std::int64_t train_size);

// Pairwise loss matrix l(y_i, yhat_j) on a tape (n x m).
Var pairwise_loss(LossKind loss, Var y, Var yhat);

// v(y, yhat) = D1(y) - D2(yhat) - l(y, yhat) for single points.
double violation(const Vector& y, const Vector& yhat, const EntropicGanModel& model);

// Recorded dual objective
//   mean D1(y) - mean D2(G(x)) - lambda * mean_ij exp(v_ij / lambda),
// with the last term evaluated as exp(logsumexp(v / lambda) + log lambda - log(n m)).
class DualObjectiveGraph {
 public:
  enum class Wrt { Discriminators, Generator, All };

  DualObjectiveGraph(const EntropicGanModel& shape, Eigen::Index real_batch, Eigen::Index fake_batch,
                     Wrt wrt);

  // Loads parameters and batches, runs forward, returns the objective.
  double evaluate(const EntropicGanModel& model, const Matrix& y, const Matrix& latents);
  // Fills the gradient lists of the differentiable networks, each in
  // MlpParams::tensors() order. Requires evaluate() first.
  void backward();
  const std::vector<Tensor>& d1_grads() const { return d1_grads_; }
  const std::vector<Tensor>& d2_grads() const { return d2_grads_; }
  const std::vector<Tensor>& generator_grads() const { return g_grads_; }
  double mean_violation() const;

  Tape& tape() { return *tape_; }
  // Leaf values in tape order for the current state (for finite differences).
  std::vector<Tensor> leaf_values() const;

 private:
  std::unique_ptr<Tape> tape_;
  Wrt wrt_;
  MlpVars gen_, d1_, d2_;
  Var y_, x_, v_, objective_;
  std::vector<Tensor> d1_grads_, d2_grads_, g_grads_;
};

double dual_objective(const EntropicGanModel& model, const Matrix& y, const Matrix& latents);

// Alternating ascent on (D1, D2) and descent on G.
std::pair<EntropicGanModel, TrainLog> train(const TrainConfig& config, const SampleBatch& data,
                                            const CheckpointFn& on_checkpoint = {});

// Continues training from an existing model (used by the evolution driver).
TrainLog train_from(EntropicGanModel& model, const TrainConfig& config, const SampleBatch& data,
                    const CheckpointFn& on_checkpoint = {});

// `steps` ascent updates on D1, D2 with G held fixed.
EntropicGanModel refine_discriminators(const EntropicGanModel& model, const SampleBatch& data,
                                       int steps, const TrainConfig& config);

// Debiased Sinkhorn loss between two point clouds, unrolled for a fixed number
// of log-domain iterations on the tape (uniform weights).
Var unrolled_sinkhorn_loss(Var x, Var y, LossKind loss, double lambda, int iterations);
Var unrolled_entropic_ot(Var x, Var y, LossKind loss, double lambda, int iterations);

struct SinkhornTrainConfig {
  TrainConfig base;
  int sinkhorn_iterations = 10;
};

// Generator-only training on minibatch Sinkhorn loss; D1, D2 stay at init.
std::pair<EntropicGanModel, TrainLog> sinkhorn_loss_train(const SinkhornTrainConfig& config,
                                                          const SampleBatch& data);

}  // namespace egan

#endif  // EGAN_ENTROPIC_GAN_HPP_
