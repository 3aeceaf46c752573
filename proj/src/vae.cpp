#include "serprank/nn/vae.hpp"

#include <cmath>
#include <utility>

namespace serprank::nn {

MlpSpec VaeSpec::encoder_spec() const {
  MlpSpec spec;
  spec.input_dim = state_dim;
  spec.hidden = encoder_hidden;
  spec.output_dim = 2 * latent_dim;  // mu followed by log variance
  spec.output_activation = OutputActivation::kIdentity;
  return spec;
}

MlpSpec VaeSpec::decoder_spec() const {
  MlpSpec spec;
  spec.input_dim = state_dim + latent_dim;
  spec.hidden = decoder_hidden;
  spec.output_dim = output_dim;
  spec.output_activation = OutputActivation::kIdentity;
  return spec;
}

void VaeSpec::validate() const {
  if (state_dim < 1) throw ArgumentError("vae state_dim must be >= 1");
  if (latent_dim < 1) throw ArgumentError("vae latent_dim must be >= 1");
  if (output_dim < 1) throw ArgumentError("vae output_dim must be >= 1");
  encoder_spec().validate();
  decoder_spec().validate();
}

VaeState init_vae(const VaeSpec& spec, Rng& rng) {
  spec.validate();
  VaeState state;
  state.encoder = init_mlp(spec.encoder_spec(), rng);
  state.decoder = init_mlp(spec.decoder_spec(), rng);
  return state;
}

double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var) {
  if (mu.size() != log_var.size()) throw ShapeError("kl inputs differ in length");
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    total += 0.5 * (mu[i] * mu[i] + std::exp(log_var[i]) - log_var[i] - 1.0);
  }
  return total;
}

VaeForward vae_forward(const VaeState& state, const VaeSpec& spec,
                       const Eigen::VectorXd& input_state, Rng& rng, VaeTape* tape) {
  Eigen::VectorXd xi(spec.latent_dim);
  for (int i = 0; i < spec.latent_dim; ++i) xi[i] = rng.normal();
  return vae_forward_with_noise(state, spec, input_state, xi, tape);
}

VaeForward vae_forward_with_noise(const VaeState& state, const VaeSpec& spec,
                                  const Eigen::VectorXd& input_state, const Eigen::VectorXd& xi,
                                  VaeTape* tape) {
  spec.validate();
  if (xi.size() != spec.latent_dim) throw ShapeError("noise vector length mismatch");
  const MlpSpec enc = spec.encoder_spec();
  const MlpSpec dec = spec.decoder_spec();
  Tape local_enc_tape;
  Tape* enc_tape = tape != nullptr ? &tape->encoder_tape : &local_enc_tape;
  const Eigen::VectorXd enc_out = mlp_forward_vec(state.encoder, enc, input_state, enc_tape);
  const Eigen::VectorXd mu = enc_out.head(spec.latent_dim);
  const Eigen::VectorXd log_var = enc_out.tail(spec.latent_dim);
  Eigen::VectorXd sigma(spec.latent_dim);
  for (int i = 0; i < spec.latent_dim; ++i) {
    sigma[i] = std::exp(0.5 * log_var[i]);
    if (!std::isfinite(sigma[i])) {
      throw NumericError("non-finite encoder variance");
    }
  }
  const Eigen::VectorXd z = mu + sigma.cwiseProduct(xi);

  Eigen::VectorXd dec_in(dec.input_dim);
  dec_in << input_state, z;
  Tape* dec_tape = tape != nullptr ? &tape->decoder_tape : nullptr;
  VaeForward out;
  out.scores = mlp_forward_vec(state.decoder, dec, dec_in, dec_tape);
  out.mu = mu;
  out.log_var = log_var;
  out.kl = gaussian_kl(mu, log_var);
  if (tape != nullptr) {
    tape->mu = mu;
    tape->log_var = log_var;
    tape->sigma = sigma;
    tape->xi = xi;
    tape->z = z;
  }
  return out;
}

Eigen::VectorXd vae_decode(const VaeState& state, const VaeSpec& spec,
                           const Eigen::VectorXd& input_state, const Eigen::VectorXd& z,
                           Tape* tape) {
  const MlpSpec dec = spec.decoder_spec();
  if (z.size() != spec.latent_dim) throw ShapeError("latent vector length mismatch");
  Eigen::VectorXd dec_in(dec.input_dim);
  dec_in << input_state, z;
  return mlp_forward_vec(state.decoder, dec, dec_in, tape);
}

void vae_backward(const VaeState& state, const VaeSpec& spec, const VaeTape& tape,
                  const Eigen::VectorXd& d_scores, double kl_weight, VaeGrads& grads) {
  const MlpSpec enc = spec.encoder_spec();
  const MlpSpec dec = spec.decoder_spec();
  if (d_scores.size() != spec.output_dim) {
    throw ShapeError("score gradient length mismatch");
  }
  const Eigen::MatrixXd d_dec_in =
      mlp_backward(state.decoder, dec, tape.decoder_tape, d_scores, grads.decoder);
  const Eigen::VectorXd d_z = d_dec_in.col(0).tail(spec.latent_dim);

  // z = mu + exp(log_var / 2) .* xi, KL = sum (mu^2 + e^lv - lv - 1) / 2.
  Eigen::VectorXd d_mu = d_z + kl_weight * tape.mu;
  Eigen::VectorXd d_log_var(spec.latent_dim);
  for (int i = 0; i < spec.latent_dim; ++i) {
    d_log_var[i] = d_z[i] * 0.5 * tape.sigma[i] * tape.xi[i] +
                   kl_weight * 0.5 * (std::exp(tape.log_var[i]) - 1.0);
  }
  Eigen::VectorXd upstream(2 * spec.latent_dim);
  upstream << d_mu, d_log_var;
  mlp_backward(state.encoder, enc, tape.encoder_tape, upstream, grads.encoder);
}

MlpSpec perturb_spec(int state_dim, int k, std::vector<int> hidden) {
  MlpSpec spec;
  spec.input_dim = state_dim + k;
  spec.hidden = std::move(hidden);
  spec.output_dim = k;
  spec.output_activation = OutputActivation::kTanh;
  return spec;
}

Eigen::VectorXd perturb_forward(const ModelState& state, const MlpSpec& spec,
                                const Eigen::VectorXd& input_state,
                                const Eigen::VectorXd& ranklist_scores, double phi,
                                Tape* tape) {
  if (phi <= 0.0) throw ArgumentError("perturbation bound must be positive");
  if (spec.output_activation != OutputActivation::kTanh) {
    throw ContractError("perturbation network requires a tanh output head");
  }
  Eigen::VectorXd input(input_state.size() + ranklist_scores.size());
  input << input_state, ranklist_scores;
  return phi * mlp_forward_vec(state, spec, input, tape);
}

}  // namespace serprank::nn
