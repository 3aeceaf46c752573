#pragma once

#include <Eigen/Core>
#include <vector>

#include "serprank/common.hpp"
#include "serprank/nn/mlp.hpp"

namespace serprank::nn {

// Conditional VAE over score vectors: encoder maps a query state to
// (mu, log sigma^2); decoder maps (state, latent) to one score per rank slot.
struct VaeSpec {
  int state_dim = 0;  // k * feature_count
  int latent_dim = 32;
  std::vector<int> encoder_hidden{256};
  std::vector<int> decoder_hidden{256};
  int output_dim = 0;  // k

  MlpSpec encoder_spec() const;
  MlpSpec decoder_spec() const;
  void validate() const;
  bool operator==(const VaeSpec& other) const = default;
};

struct VaeState {
  ModelState encoder;
  ModelState decoder;
};

struct VaeTape {
  Tape encoder_tape;
  Tape decoder_tape;
  Eigen::VectorXd mu, log_var, sigma, xi, z;
};

struct VaeForward {
  Eigen::VectorXd scores;
  Eigen::VectorXd mu, log_var;
  double kl = 0.0;
};

struct VaeGrads {
  MlpGrads encoder;
  MlpGrads decoder;
};

VaeState init_vae(const VaeSpec& spec, Rng& rng);

// Sum over dims of (mu^2 + sigma^2 - log sigma^2 - 1) / 2 against N(0, I).
double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var);

// Reparameterized pass: z = mu + sigma .* xi with xi ~ N(0,1) drawn from rng.
VaeForward vae_forward(const VaeState& state, const VaeSpec& spec,
                       const Eigen::VectorXd& input_state, Rng& rng, VaeTape* tape = nullptr);

// Same pass with the noise supplied by the caller; deterministic in (state, xi).
VaeForward vae_forward_with_noise(const VaeState& state, const VaeSpec& spec,
                                  const Eigen::VectorXd& input_state, const Eigen::VectorXd& xi,
                                  VaeTape* tape = nullptr);

// Decoder only, for candidate generation with an external latent draw.
Eigen::VectorXd vae_decode(const VaeState& state, const VaeSpec& spec,
                           const Eigen::VectorXd& input_state, const Eigen::VectorXd& z,
                           Tape* tape = nullptr);

// Reverse pass of loss = (term with gradient d_scores w.r.t. the decoder
// output) + kl_weight * KL.  Accumulates into `grads`.
void vae_backward(const VaeState& state, const VaeSpec& spec, const VaeTape& tape,
                  const Eigen::VectorXd& d_scores, double kl_weight, VaeGrads& grads);

// Perturbation head: phi * tanh(net([state; ranklist_scores])), elementwise in
// (-phi, phi).  The returned MlpSpec carries the tanh output activation.
MlpSpec perturb_spec(int state_dim, int k, std::vector<int> hidden = {128});
Eigen::VectorXd perturb_forward(const ModelState& state, const MlpSpec& spec,
                                const Eigen::VectorXd& input_state,
                                const Eigen::VectorXd& ranklist_scores, double phi,
                                Tape* tape = nullptr);

}  // namespace serprank::nn
