#include "egan/nets.hpp"

#include <cmath>

#include "egan/random.hpp"

namespace egan {

const char* activation_name(Activation a) {
  return a == Activation::Identity ? "identity" : "leaky_relu";
}

Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "leaky_relu") return Activation::LeakyRelu;
  throw InvalidArgument("unknown activation '" + s + "'");
}

MlpSpec MlpSpec::uniform(std::vector<int> widths, Activation act) {
  MlpSpec s;
  const std::size_t hidden = widths.size() >= 2 ? widths.size() - 2 : 0;
  s.widths = std::move(widths);
  s.hidden.assign(hidden, act);
  return s;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw InvalidArgument("MlpSpec: need at least one layer");
  for (int w : widths) {
    if (w <= 0) throw InvalidArgument("MlpSpec: widths must be positive");
  }
  if (hidden.size() != widths.size() - 2) {
    throw InvalidArgument("MlpSpec: expected one activation per hidden layer");
  }
}

bool MlpSpec::is_linear() const {
  for (Activation a : hidden) {
    if (a != Activation::Identity) return false;
  }
  return true;
}

std::vector<Tensor*> MlpParams::tensors() {
  std::vector<Tensor*> out;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    out.push_back(&weights[k]);
    out.push_back(&biases[k]);
  }
  return out;
}

std::vector<const Tensor*> MlpParams::tensors() const {
  std::vector<const Tensor*> out;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    out.push_back(&weights[k]);
    out.push_back(&biases[k]);
  }
  return out;
}

std::vector<std::string> MlpParams::tensor_names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    out.push_back(prefix + ".layer" + std::to_string(k) + ".weight");
    out.push_back(prefix + ".layer" + std::to_string(k) + ".bias");
  }
  return out;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

MlpParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  MlpParams p;
  p.spec = spec;
  for (std::size_t k = 0; k < spec.layers(); ++k) {
    const int fan_in = spec.widths[k];
    const int fan_out = spec.widths[k + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.normal();
    p.weights.push_back(std::move(w));
    p.biases.push_back(Tensor::Zero(1, fan_out));
  }
  return p;
}

Matrix mlp_forward(const MlpParams& params, const Eigen::Ref<const Matrix>& batch) {
  const MlpSpec& spec = params.spec;
  if (batch.cols() != spec.input_width()) {
    throw ShapeError("mlp_forward: batch has " + std::to_string(batch.cols()) +
                     " columns, network expects " + std::to_string(spec.input_width()));
  }
  Matrix h = batch;
  for (std::size_t k = 0; k < spec.layers(); ++k) {
    Matrix next = h * params.weights[k].transpose();
    next.rowwise() += params.biases[k].row(0);
    if (k + 1 < spec.layers() && spec.hidden[k] == Activation::LeakyRelu) {
      next = next.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    }
    h = std::move(next);
  }
  return h;
}

void MlpVars::assign(Tape& tape, const MlpParams& params) const {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    tape.set(weights[k], params.weights[k]);
    tape.set(biases[k], params.biases[k]);
  }
}

std::vector<Var> MlpVars::vars() const {
  std::vector<Var> out;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    out.push_back(weights[k]);
    out.push_back(biases[k]);
  }
  return out;
}

MlpVars declare_mlp(Tape& tape, const MlpSpec& spec, bool differentiable,
                    const std::string& prefix) {
  spec.validate();
  MlpVars net;
  net.spec = spec;
  for (std::size_t k = 0; k < spec.layers(); ++k) {
    const std::string base = prefix + ".layer" + std::to_string(k);
    if (differentiable) {
      net.weights.push_back(tape.input(spec.widths[k + 1], spec.widths[k], base + ".weight"));
      net.biases.push_back(tape.input(1, spec.widths[k + 1], base + ".bias"));
    } else {
      net.weights.push_back(tape.constant(spec.widths[k + 1], spec.widths[k], base + ".weight"));
      net.biases.push_back(tape.constant(1, spec.widths[k + 1], base + ".bias"));
    }
  }
  return net;
}

Var mlp_forward(const MlpVars& net, Var batch) {
  Tape& tape = *batch.tape;
  Var h = batch;
  for (std::size_t k = 0; k < net.spec.layers(); ++k) {
    h = tape.affine(h, net.weights[k], net.biases[k]);
    if (k + 1 < net.spec.layers() && net.spec.hidden[k] == Activation::LeakyRelu) {
      h = tape.leaky_relu(h, kLeakySlope);
    }
  }
  return h;
}

AffineMap collapse_linear(const MlpParams& params) {
  if (!params.spec.is_linear()) {
    throw InvalidArgument("collapse_linear: network has non-identity activations");
  }
  const int in = params.spec.input_width();
  Matrix m = Matrix::Identity(in, in);
  Vector c = Vector::Zero(in);
  for (std::size_t k = 0; k < params.spec.layers(); ++k) {
    const Matrix w = params.weights[k];
    c = w * c + params.biases[k].row(0).transpose();
    m = w * m;
  }
  return {m, c};
}

const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::Adam ? "adam" : "sgd_momentum";
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd_momentum" || s == "sgd") return OptimizerKind::SgdMomentum;
  throw InvalidArgument("unknown optimizer '" + s + "'");
}

OptimizerState::OptimizerState(OptimizerConfig cfg, const MlpParams& params)
    : config(cfg) {
  for (const Tensor* t : params.tensors()) {
    first.push_back(Tensor::Zero(t->rows(), t->cols()));
    second.push_back(Tensor::Zero(t->rows(), t->cols()));
  }
}

void optimizer_step(OptimizerState& state, MlpParams& params, const std::vector<Tensor>& grads,
                    const std::string& prefix) {
  std::vector<Tensor*> ts = params.tensors();
  if (grads.size() != ts.size() || state.first.size() != ts.size()) {
    throw ShapeError("optimizer_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(ts.size()) + " parameter tensors");
  }
  const auto names = params.tensor_names(prefix);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (grads[k].rows() != ts[k]->rows() || grads[k].cols() != ts[k]->cols()) {
      throw ShapeError("optimizer_step: gradient shape mismatch for " + names[k]);
    }
    if (!grads[k].allFinite()) {
      throw NumericError("optimizer_step: non-finite gradient for " + names[k]);
    }
  }
  const OptimizerConfig& c = state.config;
  ++state.step;
  if (c.kind == OptimizerKind::Adam) {
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < ts.size(); ++k) {
      state.first[k] = c.beta1 * state.first[k] + (1.0 - c.beta1) * grads[k];
      state.second[k] = c.beta2 * state.second[k] + (1.0 - c.beta2) * grads[k].array().square().matrix();
      ts[k]->array() -= c.learning_rate * (state.first[k].array() / bc1) /
                        ((state.second[k].array() / bc2).sqrt() + c.epsilon);
    }
  } else {
    for (std::size_t k = 0; k < ts.size(); ++k) {
      state.first[k] = c.beta1 * state.first[k] + grads[k];
      *ts[k] -= c.learning_rate * state.first[k];
    }
  }
}

}  // namespace egan
