#ifndef EGAN_NETS_HPP_
#define EGAN_NETS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "egan/grad_engine.hpp"
#include "egan/types.hpp"

namespace egan {

enum class Activation { Identity, LeakyRelu };

inline constexpr double kLeakySlope = 0.2;

const char* activation_name(Activation a);
Activation parse_activation(const std::string& s);

// Dense feed-forward layout. widths = {input, hidden..., output}; one
// activation per hidden layer; the output layer is always linear.
struct MlpSpec {
  std::vector<int> widths;
  std::vector<Activation> hidden;

  static MlpSpec uniform(std::vector<int> widths, Activation act);

  void validate() const;
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  std::size_t layers() const { return widths.size() - 1; }
  bool is_linear() const;
  bool operator==(const MlpSpec&) const = default;
};

struct MlpParams {
  MlpSpec spec;
  std::vector<Tensor> weights;  // layer k: widths[k+1] x widths[k]
  std::vector<Tensor> biases;   // layer k: 1 x widths[k+1]

  // Flattened tensor list: w0, b0, w1, b1, ...
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names(const std::string& prefix) const;
  std::size_t parameter_count() const;
  bool operator==(const MlpParams&) const = default;
};

// Weights ~ N(0, 1/fan_in), biases zero.
MlpParams init_params(const MlpSpec& spec, std::uint64_t seed);

// Row-wise evaluation outside of any tape.
Matrix mlp_forward(const MlpParams& params, const Eigen::Ref<const Matrix>& batch);

// Leaves for one network's parameters on a tape, in tensors() order.
struct MlpVars {
  MlpSpec spec;
  std::vector<Var> weights;
  std::vector<Var> biases;

  void assign(Tape& tape, const MlpParams& params) const;
  std::vector<Var> vars() const;
};

// Declares the parameters as input() leaves (differentiable) or constant()
// leaves.
MlpVars declare_mlp(Tape& tape, const MlpSpec& spec, bool differentiable,
                    const std::string& prefix);
Var mlp_forward(const MlpVars& net, Var batch);

// For an all-identity network returns the equivalent affine map
// x -> matrix * x + offset.
struct AffineMap {
  Matrix matrix;
  Vector offset;
};
AffineMap collapse_linear(const MlpParams& params);

enum class OptimizerKind { Adam, SgdMomentum };

const char* optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;  // momentum for SgdMomentum
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::int64_t step = 0;

  OptimizerState() = default;
  OptimizerState(OptimizerConfig cfg, const MlpParams& params);
};

// Descent step params <- params - update(grads). Callers maximizing an
// objective pass negated gradients.
void optimizer_step(OptimizerState& state, MlpParams& params, const std::vector<Tensor>& grads,
                    const std::string& prefix = "param");

}  // namespace egan

#endif  // EGAN_NETS_HPP_
