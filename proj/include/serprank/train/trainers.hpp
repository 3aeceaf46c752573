#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "serprank/common.hpp"
#include "serprank/data/dataset.hpp"
#include "serprank/metrics/metrics.hpp"
#include "serprank/nn/mlp.hpp"
#include "serprank/nn/vae.hpp"
#include "serprank/policy/policy.hpp"
#include "serprank/train/config.hpp"

namespace serprank::train {

// Page-level scalar feedback: an opaque number, deliberately detached from any
// gradient bookkeeping.
struct RewardSignal {
  double value = 0.0;
  RewardMetric metric = RewardMetric::kNdcg;
  int cutoff = 10;
};

struct StepStats {
  double loss = 0.0;
  double mean_reward = 0.0;
  int skipped_groups = 0;  // label-degenerate groups that contributed nothing
};

// One row of steps.csv.
struct StepLog {
  long step = 0;
  Algorithm algorithm = Algorithm::kPgRank;
  double loss = 0.0;
  double mean_reward = 0.0;
  double lr = 0.0;
  std::uint64_t seed = 0;
};

// Every network one algorithm owns.  The scorer spec is identical for all six
// algorithms; fields beyond it stay empty unless the algorithm uses them.
struct AlgorithmState {
  Algorithm algorithm = Algorithm::kPgRank;
  int feature_count = 0;
  long global_step = 0;

  nn::MlpSpec scorer_spec;
  nn::ModelState scorer;  // policy scorer; doubles as the actor trunk

  nn::MlpSpec critic_spec;       // state-action value nets
  nn::ModelState critic;         // actor-critic main critic
  nn::ModelState actor_target;   // actor-critic targets
  nn::ModelState critic_target;

  nn::VaeSpec vae_spec;  // batch-constrained generator + twin critics
  nn::VaeState vae;
  nn::MlpSpec perturb_net_spec;
  nn::ModelState perturb;
  nn::ModelState perturb_target;
  nn::ModelState critic1, critic2;
  nn::ModelState critic1_target, critic2_target;
};

// Builds all networks for the configured algorithm.  The scorer is always
// drawn first, so a fixed seed yields the same scorer for every algorithm.
AlgorithmState init_algorithm(const TrainerConfig& config, int feature_count, Rng& rng);

// Reward of a produced ranklist against the group's grades, per the configured
// metric and cutoff.  `group_grades` also supplies the ideal-ranking pool.
RewardSignal serp_reward(const policy::RankList& ranklist, const std::vector<int>& group_grades,
                         const TrainerConfig& config);

// One query rendered as a fixed-size SERP state: first k documents (padded
// with zero-feature grade-0 slots when short), features stacked column-wise
// and concatenated into one long state vector.
struct SerpState {
  std::string qid;
  Eigen::MatrixXd features;        // feature_count x k
  Eigen::VectorXd state;           // k * feature_count, column after column
  std::vector<std::uint8_t> mask;  // real-document slots
  std::vector<int> grades;         // grades of the real documents only
};

SerpState make_serp_state(const data::QueryGroup& group, int k, int feature_count);

// Descending stable ordering of real slots; ties keep the lower index first.
std::vector<int> rank_by_scores(const Eigen::VectorXd& scores,
                                const std::vector<std::uint8_t>& mask = {});
policy::RankList ranklist_from_scores(const Eigen::VectorXd& scores,
                                      const std::vector<std::uint8_t>& mask,
                                      const std::string& qid);

// ---------------------------------------------------------------------------
// Each trainer splits into: a plan (every random draw plus frozen regression
// targets), a pure loss-and-gradient function of (parameters, plan), and a
// step that chains plan -> gradients -> optimizer.  The split keeps every
// loss finite-difference checkable with the plan held fixed.
// ---------------------------------------------------------------------------

// ----- listwise policy gradient (sampling without replacement) -----
struct PgPlan {
  std::vector<std::vector<policy::RankList>> ranklists;  // [query][sample]
  std::vector<std::vector<double>> rewards;
};

PgPlan make_pgrank_plan(const AlgorithmState& state, const data::Batch& batch,
                        const TrainerConfig& config, Rng& rng);
StepStats pgrank_loss(const nn::ModelState& scorer, const AlgorithmState& state,
                      const data::Batch& batch, const TrainerConfig& config, const PgPlan& plan,
                      nn::MlpGrads* grads);
StepLog pgrank_step(AlgorithmState& state, const data::Batch& batch,
                    const TrainerConfig& config, Rng& rng);

// ----- with-replacement top-k sampling with the rank-position correction -----
struct TopkPlan {
  std::vector<policy::RankList> ranklists;  // one per query
  std::vector<double> rewards;
};

TopkPlan make_topk_plan(const AlgorithmState& state, const data::Batch& batch,
                        const TrainerConfig& config, Rng& rng);
StepStats reinforce_topk_loss(const nn::ModelState& scorer, const AlgorithmState& state,
                              const data::Batch& batch, const TrainerConfig& config,
                              const TopkPlan& plan, nn::MlpGrads* grads);
StepLog reinforce_topk_step(AlgorithmState& state, const data::Batch& batch,
                            const TrainerConfig& config, Rng& rng);

// ----- deterministic actor-critic -----
struct DdpgPlan {
  std::vector<SerpState> states;
  std::vector<Eigen::VectorXd> actions;  // tanh actor scores, padding zeroed
  std::vector<double> rewards;
  std::vector<double> targets;  // frozen regression targets y_q
};

DdpgPlan make_ddpg_plan(const AlgorithmState& state, const data::Batch& batch,
                        const TrainerConfig& config);
StepStats ddpg_critic_loss(const nn::ModelState& critic, const AlgorithmState& state,
                           const TrainerConfig& config, const DdpgPlan& plan,
                           nn::MlpGrads* grads);
// Returns the maximized objective (mean critic value of the actor's actions);
// `grads` receives the descent gradient of its negation.
double ddpg_actor_objective(const nn::ModelState& actor, const AlgorithmState& state,
                            const TrainerConfig& config, const DdpgPlan& plan,
                            nn::MlpGrads* grads);
StepLog ddpg_step(AlgorithmState& state, const data::Batch& batch, const TrainerConfig& config,
                  Rng& rng);

// ----- batch-constrained Q-learning -----
struct BcqPlan {
  std::vector<SerpState> states;
  std::vector<Eigen::VectorXd> xi;         // reparameterization noise per query
  std::vector<policy::RankList> sampled;   // generator's sampled ranklist
  std::vector<double> rewards;             // reward of the sampled ranklist
  std::vector<Eigen::VectorXd> actions;    // generator scores at plan time, padding zeroed
  std::vector<double> targets;             // frozen y_q = reward + alpha_td * delta
};

BcqPlan make_bcq_plan(const AlgorithmState& state, const data::Batch& batch,
                      const TrainerConfig& config, Rng& rng);
StepStats bcq_vae_loss(const nn::VaeState& vae, const AlgorithmState& state,
                       const TrainerConfig& config, const BcqPlan& plan, nn::VaeGrads* grads);
StepStats bcq_critic_loss(const nn::ModelState& critic, const AlgorithmState& state,
                          const TrainerConfig& config, const BcqPlan& plan,
                          nn::MlpGrads* grads);
// Maximized objective: mean first-critic value of perturbed plan actions.
double bcq_perturb_objective(const nn::ModelState& perturb, const AlgorithmState& state,
                             const TrainerConfig& config, const BcqPlan& plan,
                             nn::MlpGrads* grads);
StepLog bcq_step(AlgorithmState& state, const data::Batch& batch, const TrainerConfig& config,
                 Rng& rng);

// ----- supervised baselines on the fine-grained grades -----
StepStats oracle_ce_loss(const nn::ModelState& scorer, const AlgorithmState& state,
                         const data::Batch& batch, const TrainerConfig& config,
                         nn::MlpGrads* grads);
StepLog oracle_ce_step(AlgorithmState& state, const data::Batch& batch,
                       const TrainerConfig& config);
StepStats oracle_lambdarank_loss(const nn::ModelState& scorer, const AlgorithmState& state,
                                 const data::Batch& batch, const TrainerConfig& config,
                                 nn::MlpGrads* grads);
StepLog oracle_lambdarank_step(AlgorithmState& state, const data::Batch& batch,
                               const TrainerConfig& config);

// Dispatches to the configured algorithm's step routine.
StepLog train_step(AlgorithmState& state, const data::Batch& batch,
                   const TrainerConfig& config, Rng& rng);

// Deterministic inference over a whole dataset: score-sort policies rank by
// descending scorer output; the batch-constrained policy picks the best-value
// candidate among m generated-and-perturbed score vectors (fixed eval seed).
metrics::MetricReport evaluate_policy(const AlgorithmState& state, const data::Dataset& dataset,
                                      const TrainerConfig& config);

void save_algorithm_state(const std::string& path, const AlgorithmState& state);
AlgorithmState load_algorithm_state(const std::string& path);

}  // namespace serprank::train
