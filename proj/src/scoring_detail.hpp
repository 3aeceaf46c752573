#pragma once

// Private helpers shared by the trainer and evaluation translation units.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "serprank/train/trainers.hpp"

namespace serprank::train::detail {

inline Eigen::MatrixXd group_features(const data::QueryGroup& group, int feature_count) {
  Eigen::MatrixXd x(feature_count, static_cast<Eigen::Index>(group.documents.size()));
  for (std::size_t d = 0; d < group.documents.size(); ++d) {
    if (group.documents[d].features.size() != feature_count) {
      throw ShapeError("document has " + std::to_string(group.documents[d].features.size()) +
                       " features, model expects " + std::to_string(feature_count));
    }
    x.col(static_cast<Eigen::Index>(d)) = group.documents[d].features;
  }
  return x;
}

inline std::vector<int> group_grades(const data::QueryGroup& group) {
  std::vector<int> grades;
  grades.reserve(group.documents.size());
  for (const auto& doc : group.documents) grades.push_back(doc.relevance);
  return grades;
}

// Scores every document of a group with the shared scorer (one column each).
inline Eigen::VectorXd score_group(const nn::ModelState& scorer, const nn::MlpSpec& spec,
                                   const data::QueryGroup& group, int feature_count,
                                   nn::Tape* tape) {
  const Eigen::MatrixXd x = group_features(group, feature_count);
  return mlp_forward(scorer, spec, x, tape).row(0).transpose();
}

// Value of one state-action pair under a critic network.
inline double critic_value(const nn::ModelState& critic, const AlgorithmState& state,
                           const SerpState& serp, const Eigen::VectorXd& action,
                           nn::Tape* tape) {
  Eigen::VectorXd input(serp.state.size() + action.size());
  input << serp.state, action;
  return mlp_forward_vec(critic, state.critic_spec, input, tape)[0];
}

// Generator scores for one SERP state with padding zeroed.
inline Eigen::VectorXd generator_scores(const nn::VaeState& vae, const AlgorithmState& state,
                                        const SerpState& serp, const Eigen::VectorXd& z) {
  Eigen::VectorXd scores = nn::vae_decode(vae, state.vae_spec, serp.state, z);
  for (int i = 0; i < scores.size(); ++i) {
    if (serp.mask[static_cast<std::size_t>(i)] == 0) scores[i] = 0.0;
  }
  return scores;
}

// Bounded noise from a perturbation net, zeroed on padding slots.
inline Eigen::VectorXd bounded_perturbation(const nn::ModelState& perturb,
                                            const AlgorithmState& state, const SerpState& serp,
                                            const Eigen::VectorXd& action, double phi,
                                            nn::Tape* tape) {
  Eigen::VectorXd noise =
      nn::perturb_forward(perturb, state.perturb_net_spec, serp.state, action, phi, tape);
  for (int i = 0; i < noise.size(); ++i) {
    if (serp.mask[static_cast<std::size_t>(i)] == 0) noise[i] = 0.0;
  }
  return noise;
}

}  // namespace serprank::train::detail
