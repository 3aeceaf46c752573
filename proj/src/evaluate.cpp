#include <limits>

#include "serprank/train/trainers.hpp"
#include "scoring_detail.hpp"

namespace serprank::train {

namespace {

// Stream tag for the fixed per-query latents used at evaluation time.
constexpr std::uint64_t kEvalLatentStream = 0x5eb5e7a1u;

}  // namespace

metrics::MetricReport evaluate_policy(const AlgorithmState& state, const data::Dataset& dataset,
                                      const TrainerConfig& config) {
  metrics::MetricReport report;
  for (std::size_t g = 0; g < dataset.groups.size(); ++g) {
    const data::QueryGroup& group = dataset.groups[g];
    const std::vector<int> all_grades = detail::group_grades(group);
    std::vector<int> ranked_grades;
    if (state.algorithm == Algorithm::kBcq) {
      // Candidate with the best first-critic value among m generated-and-
      // perturbed score vectors; latents come from a fixed per-query stream
      // so repeated evaluations agree.
      const SerpState serp =
          make_serp_state(group, config.rank_list_size, state.feature_count);
      Rng eval_rng(mix_seed(kEvalLatentStream, static_cast<std::uint64_t>(g)));
      double best_value = -std::numeric_limits<double>::infinity();
      Eigen::VectorXd best_action;
      for (int m = 0; m < config.m_samples; ++m) {
        Eigen::VectorXd z(state.vae_spec.latent_dim);
        for (int i = 0; i < z.size(); ++i) z[i] = eval_rng.normal();
        Eigen::VectorXd action = detail::generator_scores(state.vae, state, serp, z);
        action += detail::bounded_perturbation(state.perturb, state, serp, action, config.phi,
                                               nullptr);
        const double value = detail::critic_value(state.critic1, state, serp, action, nullptr);
        if (value > best_value) {
          best_value = value;
          best_action = action;
        }
      }
      for (int p : rank_by_scores(best_action, serp.mask)) {
        ranked_grades.push_back(serp.grades[static_cast<std::size_t>(p)]);
      }
    } else {
      const Eigen::VectorXd scores = detail::score_group(state.scorer, state.scorer_spec, group,
                                                         state.feature_count, nullptr);
      for (int p : rank_by_scores(scores)) {
        ranked_grades.push_back(all_grades[static_cast<std::size_t>(p)]);
      }
    }
    report.add(group.qid, ranked_grades, all_grades, dataset.max_grade);
  }
  return report;
}

}  // namespace serprank::train
