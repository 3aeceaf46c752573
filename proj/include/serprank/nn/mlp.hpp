#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "serprank/common.hpp"

namespace serprank::nn {

// ELU with alpha = 1.
double elu(double x);
// Derivative of ELU expressed in terms of the pre-activation.
double elu_derivative(double pre);

enum class OutputActivation { kIdentity, kTanh };

std::string to_string(OutputActivation activation);
OutputActivation output_activation_from_string(const std::string& name);

// Dense network shape: input -> hidden (ELU each) -> output head.
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden{512, 256, 128};
  int output_dim = 1;
  OutputActivation output_activation = OutputActivation::kIdentity;

  void validate() const;
  // Total layers including the output head.
  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  bool operator==(const MlpSpec& other) const = default;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_biases, v_biases;
  std::int64_t step = 0;
};

// Parameters plus optimizer moments.  `revision` increments on every parameter
// mutation so tapes recorded against an older state can be rejected.
struct ModelState {
  std::vector<Eigen::MatrixXd> weights;  // weights[l] has shape out_l x in_l
  std::vector<Eigen::VectorXd> biases;
  AdamState adam;
  std::uint64_t revision = 0;
};

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static MlpGrads zeros_like(const ModelState& state);
  void accumulate(const MlpGrads& other, double scale = 1.0);
  void scale(double factor);
  double squared_norm() const;
  bool is_finite() const;
};

// Intermediates of one forward call; columns are independent samples.
struct Tape {
  const ModelState* owner = nullptr;
  std::uint64_t revision = 0;
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;  // pre-activation per layer
  std::vector<Eigen::MatrixXd> act;  // post-activation per layer
};

// Weights ~ U[-1/sqrt(fan_in), +1/sqrt(fan_in)] drawn row-major, biases zero.
ModelState init_mlp(const MlpSpec& spec, Rng& rng);

// Batched forward: each column of `input` is one sample.  Pass a tape to
// record intermediates for mlp_backward.
Eigen::MatrixXd mlp_forward(const ModelState& state, const MlpSpec& spec,
                            const Eigen::MatrixXd& input, Tape* tape = nullptr);
Eigen::VectorXd mlp_forward_vec(const ModelState& state, const MlpSpec& spec,
                                const Eigen::VectorXd& input, Tape* tape = nullptr);

// Exact reverse-mode pass.  `upstream` is dLoss/dOutput with the same shape as
// the forward output; parameter gradients accumulate into `grads` and the
// return value is dLoss/dInput.  Throws ContractError if the tape was recorded
// against a different or since-mutated state.
Eigen::MatrixXd mlp_backward(const ModelState& state, const MlpSpec& spec, const Tape& tape,
                             const Eigen::MatrixXd& upstream, MlpGrads& grads);

// Joint global-norm clip over several gradient sets; returns the pre-clip norm.
double clip_grads_by_norm(std::initializer_list<MlpGrads*> grads, double max_norm);

// Bias-corrected Adam.  Throws DivergenceError on non-finite gradients.
void adam_step(ModelState& state, const MlpGrads& grads, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// target <- (1 - tau) * main + tau * target  (tau is the retained fraction of
// the old target).  Optimizer moments of the target are left untouched.
void soft_update(ModelState& target, const ModelState& main, double tau);

}  // namespace serprank::nn
