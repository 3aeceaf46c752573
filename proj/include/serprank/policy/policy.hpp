#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "serprank/common.hpp"

namespace serprank::policy {

// An ordered result list: candidate indices from one query's score vector.
struct RankList {
  std::vector<int> positions;  // unique indices, best rank first
  std::string query_ref;

  bool operator==(const RankList& other) const = default;
};

struct PolicyOutput {
  RankList ranklist;
  double log_prob = 0.0;
  std::vector<double> per_position_log_probs;
};

// Sequential sampling without replacement: rank position i receives candidate
// d with probability exp(s_d) / sum over not-yet-placed candidates, stabilized
// by max subtraction.  Produces min(k, #unmasked) positions.  A non-empty
// `mask` marks slot i as a real candidate iff mask[i] != 0.
PolicyOutput pl_sample(const Eigen::VectorXd& scores, const std::vector<std::uint8_t>& mask,
                       int k, Rng& rng);

// Exact log-probability of `ranklist` under the same model:
// sum_i [ s_{R_i} - log sum_{not yet placed} exp(s_j) ].
double pl_log_prob(const Eigen::VectorXd& scores, const RankList& ranklist,
                   const std::vector<std::uint8_t>& mask = {});

// d(pl_log_prob)/d(scores): +1 on each placed candidate, minus the softmax
// over every remaining-candidate set it appears in.  Masked slots get 0.
Eigen::VectorXd pl_log_prob_grad(const Eigen::VectorXd& scores, const RankList& ranklist,
                                 const std::vector<std::uint8_t>& mask = {});

// p_d = exp(s_d / tau) / sum_j exp(s_j / tau); masked slots get probability 0.
Eigen::VectorXd softmax_temperature(const Eigen::VectorXd& scores, double tau_temp,
                                    const std::vector<std::uint8_t>& mask = {});

// Draws i.i.d. from `probs`, keeping first occurrences until k distinct
// indices are collected; first-occurrence order is the rank order.  Throws
// SamplingStallError once max_attempts total draws fail to produce k distinct.
RankList sample_with_replacement_topk(const Eigen::VectorXd& probs, int k, Rng& rng,
                                      int max_attempts);

// Probability that a document with per-draw probability pi_d has appeared
// after i independent draws: 1 - (1 - pi_d)^i.
double topk_correction(double pi_d, int rank_position);

}  // namespace serprank::policy
