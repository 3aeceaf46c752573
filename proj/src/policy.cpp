#include "serprank/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace serprank::policy {

namespace {

std::vector<int> unmasked_indices(Eigen::Index n, const std::vector<std::uint8_t>& mask) {
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != n) {
    throw ShapeError("mask length does not match score vector");
  }
  std::vector<int> indices;
  indices.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask.empty() || mask[static_cast<std::size_t>(i)] != 0) {
      indices.push_back(static_cast<int>(i));
    }
  }
  return indices;
}

// log sum_j exp(s_j) over `indices`, max-subtracted.
double log_sum_exp(const Eigen::VectorXd& scores, const std::vector<int>& indices) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i : indices) m = std::max(m, scores[i]);
  double sum = 0.0;
  for (int i : indices) sum += std::exp(scores[i] - m);
  return m + std::log(sum);
}

void validate_ranklist(const Eigen::VectorXd& scores, const RankList& ranklist,
                       const std::vector<std::uint8_t>& mask) {
  std::vector<bool> seen(static_cast<std::size_t>(scores.size()), false);
  for (int idx : ranklist.positions) {
    if (idx < 0 || idx >= scores.size()) {
      throw ContractError("ranklist index " + std::to_string(idx) + " out of range");
    }
    if (!mask.empty() && mask[static_cast<std::size_t>(idx)] == 0) {
      throw ContractError("ranklist places masked candidate " + std::to_string(idx));
    }
    if (seen[static_cast<std::size_t>(idx)]) {
      throw ContractError("ranklist repeats candidate " + std::to_string(idx));
    }
    seen[static_cast<std::size_t>(idx)] = true;
  }
}

}  // namespace

PolicyOutput pl_sample(const Eigen::VectorXd& scores, const std::vector<std::uint8_t>& mask,
                       int k, Rng& rng) {
  if (k < 1) throw ArgumentError("rank list size must be >= 1");
  std::vector<int> remaining = unmasked_indices(scores.size(), mask);
  if (remaining.empty()) throw EmptyDatasetError("all candidates are masked");

  PolicyOutput out;
  const int length = std::min<int>(k, static_cast<int>(remaining.size()));
  out.ranklist.positions.reserve(static_cast<std::size_t>(length));
  out.per_position_log_probs.reserve(static_cast<std::size_t>(length));
  for (int pos = 0; pos < length; ++pos) {
    double m = -std::numeric_limits<double>::infinity();
    for (int i : remaining) m = std::max(m, scores[i]);
    double total = 0.0;
    for (int i : remaining) total += std::exp(scores[i] - m);

    const double r = rng.uniform01() * total;
    double cumulative = 0.0;
    std::size_t chosen = remaining.size() - 1;  // guard against rounding at the top end
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      cumulative += std::exp(scores[remaining[j]] - m);
      if (r < cumulative) {
        chosen = j;
        break;
      }
    }
    const int doc = remaining[chosen];
    const double lp = scores[doc] - (m + std::log(total));
    out.ranklist.positions.push_back(doc);
    out.per_position_log_probs.push_back(lp);
    out.log_prob += lp;
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return out;
}

double pl_log_prob(const Eigen::VectorXd& scores, const RankList& ranklist,
                   const std::vector<std::uint8_t>& mask) {
  validate_ranklist(scores, ranklist, mask);
  std::vector<int> remaining = unmasked_indices(scores.size(), mask);
  double total = 0.0;
  for (int doc : ranklist.positions) {
    auto it = std::find(remaining.begin(), remaining.end(), doc);
    if (it == remaining.end()) {
      throw ContractError("ranklist candidate " + std::to_string(doc) + " not available");
    }
    total += scores[doc] - log_sum_exp(scores, remaining);
    remaining.erase(it);
  }
  return total;
}

Eigen::VectorXd pl_log_prob_grad(const Eigen::VectorXd& scores, const RankList& ranklist,
                                 const std::vector<std::uint8_t>& mask) {
  validate_ranklist(scores, ranklist, mask);
  std::vector<int> remaining = unmasked_indices(scores.size(), mask);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(scores.size());
  for (int doc : ranklist.positions) {
    auto it = std::find(remaining.begin(), remaining.end(), doc);
    if (it == remaining.end()) {
      throw ContractError("ranklist candidate " + std::to_string(doc) + " not available");
    }
    grad[doc] += 1.0;
    const double log_z = log_sum_exp(scores, remaining);
    for (int j : remaining) {
      grad[j] -= std::exp(scores[j] - log_z);
    }
    remaining.erase(it);
  }
  return grad;
}

Eigen::VectorXd softmax_temperature(const Eigen::VectorXd& scores, double tau_temp,
                                    const std::vector<std::uint8_t>& mask) {
  if (tau_temp <= 0.0) throw ArgumentError("softmax temperature must be positive");
  const std::vector<int> valid = unmasked_indices(scores.size(), mask);
  if (valid.empty()) throw EmptyDatasetError("all candidates are masked");
  double m = -std::numeric_limits<double>::infinity();
  for (int i : valid) m = std::max(m, scores[i] / tau_temp);
  double total = 0.0;
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(scores.size());
  for (int i : valid) {
    probs[i] = std::exp(scores[i] / tau_temp - m);
    total += probs[i];
  }
  for (int i : valid) probs[i] /= total;
  return probs;
}

RankList sample_with_replacement_topk(const Eigen::VectorXd& probs, int k, Rng& rng,
                                      int max_attempts) {
  if (k < 1) throw ArgumentError("rank list size must be >= 1");
  if (max_attempts < 1) throw ArgumentError("max_attempts must be >= 1");
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0 || !std::isfinite(probs[i])) {
      throw ArgumentError("probabilities must be finite and non-negative");
    }
    total += probs[i];
  }
  if (total <= 0.0) throw ArgumentError("probabilities sum to zero");

  RankList out;
  std::vector<bool> taken(static_cast<std::size_t>(probs.size()), false);
  int attempts = 0;
  while (static_cast<int>(out.positions.size()) < k) {
    if (attempts >= max_attempts) {
      throw SamplingStallError("collected " + std::to_string(out.positions.size()) + " of " +
                               std::to_string(k) + " distinct documents in " +
                               std::to_string(max_attempts) + " draws");
    }
    ++attempts;
    const double r = rng.uniform01() * total;
    double cumulative = 0.0;
    Eigen::Index chosen = probs.size() - 1;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      cumulative += probs[i];
      if (r < cumulative) {
        chosen = i;
        break;
      }
    }
    if (!taken[static_cast<std::size_t>(chosen)]) {
      taken[static_cast<std::size_t>(chosen)] = true;
      out.positions.push_back(static_cast<int>(chosen));
    }
  }
  return out;
}

double topk_correction(double pi_d, int rank_position) {
  if (pi_d < 0.0 || pi_d > 1.0) throw ArgumentError("probability outside [0,1]");
  if (rank_position < 1) throw ArgumentError("rank position must be >= 1");
  return 1.0 - std::pow(1.0 - pi_d, static_cast<double>(rank_position));
}

}  // namespace serprank::policy
