#include "serprank/nn/mlp.hpp"

#include <algorithm>
#include <cmath>

namespace serprank::nn {

namespace {

void check_shapes(const ModelState& state, const MlpSpec& spec) {
  const int layers = spec.layer_count();
  if (static_cast<int>(state.weights.size()) != layers ||
      static_cast<int>(state.biases.size()) != layers) {
    throw ShapeError("model has " + std::to_string(state.weights.size()) +
                     " layers, spec expects " + std::to_string(layers));
  }
  int in = spec.input_dim;
  for (int l = 0; l < layers; ++l) {
    const int out = l < layers - 1 ? spec.hidden[static_cast<std::size_t>(l)] : spec.output_dim;
    if (state.weights[static_cast<std::size_t>(l)].rows() != out ||
        state.weights[static_cast<std::size_t>(l)].cols() != in ||
        state.biases[static_cast<std::size_t>(l)].size() != out) {
      throw ShapeError("layer " + std::to_string(l) + " parameters do not match spec");
    }
    in = out;
  }
}

}  // namespace

double elu(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }

double elu_derivative(double pre) { return pre > 0.0 ? 1.0 : std::exp(pre); }

std::string to_string(OutputActivation activation) {
  switch (activation) {
    case OutputActivation::kIdentity: return "identity";
    case OutputActivation::kTanh: return "tanh";
  }
  throw ArgumentError("unknown output activation");
}

OutputActivation output_activation_from_string(const std::string& name) {
  if (name == "identity") return OutputActivation::kIdentity;
  if (name == "tanh") return OutputActivation::kTanh;
  throw ArgumentError("unknown output activation '" + name + "'");
}

void MlpSpec::validate() const {
  if (input_dim < 1) throw ArgumentError("input_dim must be >= 1");
  if (output_dim < 1) throw ArgumentError("output_dim must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw ArgumentError("hidden dims must be >= 1");
  }
}

MlpGrads MlpGrads::zeros_like(const ModelState& state) {
  MlpGrads grads;
  grads.weights.reserve(state.weights.size());
  grads.biases.reserve(state.biases.size());
  for (const auto& w : state.weights) {
    grads.weights.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : state.biases) {
    grads.biases.emplace_back(Eigen::VectorXd::Zero(b.size()));
  }
  return grads;
}

void MlpGrads::accumulate(const MlpGrads& other, double scale) {
  if (weights.size() != other.weights.size()) {
    throw ShapeError("cannot accumulate gradients of different layer counts");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += scale * other.weights[l];
    biases[l] += scale * other.biases[l];
  }
}

void MlpGrads::scale(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
}

double MlpGrads::squared_norm() const {
  double total = 0.0;
  for (const auto& w : weights) total += w.squaredNorm();
  for (const auto& b : biases) total += b.squaredNorm();
  return total;
}

bool MlpGrads::is_finite() const {
  for (const auto& w : weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : biases) {
    if (!b.allFinite()) return false;
  }
  return true;
}

ModelState init_mlp(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ModelState state;
  int in = spec.input_dim;
  const int layers = spec.layer_count();
  for (int l = 0; l < layers; ++l) {
    const int out = l < layers - 1 ? spec.hidden[static_cast<std::size_t>(l)] : spec.output_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Eigen::MatrixXd w(out, in);
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < in; ++j) {
        w(i, j) = rng.uniform(-bound, bound);
      }
    }
    state.weights.push_back(std::move(w));
    state.biases.emplace_back(Eigen::VectorXd::Zero(out));
    state.adam.m_weights.emplace_back(Eigen::MatrixXd::Zero(out, in));
    state.adam.v_weights.emplace_back(Eigen::MatrixXd::Zero(out, in));
    state.adam.m_biases.emplace_back(Eigen::VectorXd::Zero(out));
    state.adam.v_biases.emplace_back(Eigen::VectorXd::Zero(out));
    in = out;
  }
  return state;
}

Eigen::MatrixXd mlp_forward(const ModelState& state, const MlpSpec& spec,
                            const Eigen::MatrixXd& input, Tape* tape) {
  check_shapes(state, spec);
  if (input.rows() != spec.input_dim) {
    throw ShapeError("forward input has " + std::to_string(input.rows()) +
                     " rows, spec expects " + std::to_string(spec.input_dim));
  }
  const int layers = spec.layer_count();
  if (tape != nullptr) {
    tape->owner = &state;
    tape->revision = state.revision;
    tape->input = input;
    tape->pre.assign(static_cast<std::size_t>(layers), {});
    tape->act.assign(static_cast<std::size_t>(layers), {});
  }
  Eigen::MatrixXd current = input;
  for (int l = 0; l < layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    Eigen::MatrixXd pre = (state.weights[li] * current).colwise() + state.biases[li];
    Eigen::MatrixXd act;
    if (l < layers - 1) {
      act = pre.unaryExpr([](double x) { return elu(x); });
    } else if (spec.output_activation == OutputActivation::kTanh) {
      act = pre.array().tanh().matrix();
    } else {
      act = pre;
    }
    if (tape != nullptr) {
      tape->pre[li] = pre;
      tape->act[li] = act;
    }
    current = std::move(act);
  }
  return current;
}

Eigen::VectorXd mlp_forward_vec(const ModelState& state, const MlpSpec& spec,
                                const Eigen::VectorXd& input, Tape* tape) {
  return mlp_forward(state, spec, Eigen::MatrixXd(input), tape);
}

Eigen::MatrixXd mlp_backward(const ModelState& state, const MlpSpec& spec, const Tape& tape,
                             const Eigen::MatrixXd& upstream, MlpGrads& grads) {
  if (tape.owner != &state || tape.revision != state.revision) {
    throw ContractError("backward tape does not match the current model state");
  }
  check_shapes(state, spec);
  const int layers = spec.layer_count();
  if (static_cast<int>(tape.pre.size()) != layers) {
    throw ContractError("tape layer count does not match spec");
  }
  if (upstream.rows() != spec.output_dim || upstream.cols() != tape.input.cols()) {
    throw ShapeError("upstream gradient shape does not match forward output");
  }
  if (grads.weights.empty()) {
    grads = MlpGrads::zeros_like(state);
  } else if (static_cast<int>(grads.weights.size()) != layers) {
    throw ShapeError("gradient accumulator does not match layer count");
  }

  Eigen::MatrixXd delta;  // dLoss/dPre of the current layer
  {
    const auto li = static_cast<std::size_t>(layers - 1);
    if (spec.output_activation == OutputActivation::kTanh) {
      delta = upstream.array() * (1.0 - tape.act[li].array().square());
    } else {
      delta = upstream;
    }
  }
  for (int l = layers - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const Eigen::MatrixXd& below = l == 0 ? tape.input : tape.act[li - 1];
    grads.weights[li] += delta * below.transpose();
    grads.biases[li] += delta.rowwise().sum();
    Eigen::MatrixXd d_below = state.weights[li].transpose() * delta;
    if (l > 0) {
      delta = d_below.array() *
              tape.pre[li - 1].unaryExpr([](double x) { return elu_derivative(x); }).array();
    } else {
      return d_below;
    }
  }
  throw ContractError("unreachable");  // loop always returns at l == 0
}

double clip_grads_by_norm(std::initializer_list<MlpGrads*> grads, double max_norm) {
  if (max_norm <= 0.0) throw ArgumentError("clip norm must be positive");
  double total = 0.0;
  for (const MlpGrads* g : grads) total += g->squared_norm();
  const double norm = std::sqrt(total);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (MlpGrads* g : grads) g->scale(factor);
  }
  return norm;
}

void adam_step(ModelState& state, const MlpGrads& grads, double lr, double beta1, double beta2,
               double eps) {
  if (state.weights.size() != grads.weights.size() ||
      state.biases.size() != grads.biases.size()) {
    throw ShapeError("gradient layer count does not match model");
  }
  if (!grads.is_finite()) {
    throw DivergenceError(state.adam.step + 1, "non-finite gradient in optimizer step");
  }
  state.adam.step += 1;
  const auto t = static_cast<double>(state.adam.step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  auto update = [&](Eigen::MatrixXd& param, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
                    const Eigen::MatrixXd& g) {
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v.array().matrix() + (1.0 - beta2) * g.array().square().matrix();
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < state.weights.size(); ++l) {
    update(state.weights[l], state.adam.m_weights[l], state.adam.v_weights[l],
           grads.weights[l]);
    Eigen::VectorXd& b = state.biases[l];
    Eigen::VectorXd& mb = state.adam.m_biases[l];
    Eigen::VectorXd& vb = state.adam.v_biases[l];
    const Eigen::VectorXd& gb = grads.biases[l];
    mb = beta1 * mb + (1.0 - beta1) * gb;
    vb = beta2 * vb.array().matrix() + (1.0 - beta2) * gb.array().square().matrix();
    b.array() -= lr * (mb.array() / bc1) / ((vb.array() / bc2).sqrt() + eps);
  }
  state.revision += 1;
}

void soft_update(ModelState& target, const ModelState& main, double tau) {
  if (tau < 0.0 || tau > 1.0) throw ArgumentError("tau must lie in [0,1]");
  if (target.weights.size() != main.weights.size()) {
    throw ShapeError("soft update across different layer counts");
  }
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    if (target.weights[l].rows() != main.weights[l].rows() ||
        target.weights[l].cols() != main.weights[l].cols()) {
      throw ShapeError("soft update across mismatched layer shapes");
    }
    target.weights[l] = (1.0 - tau) * main.weights[l] + tau * target.weights[l];
    target.biases[l] = (1.0 - tau) * main.biases[l] + tau * target.biases[l];
  }
  target.revision += 1;
}

}  // namespace serprank::nn
