#include "serprank/train/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "serprank/nn/checkpoint.hpp"
#include "scoring_detail.hpp"

namespace serprank::train {

namespace {

using detail::bounded_perturbation;
using detail::critic_value;
using detail::generator_scores;
using detail::group_grades;
using detail::score_group;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + exp(-d)) without overflow on either side.
double pairwise_logistic(double d) { return softplus(-d); }

void check_finite_loss(double loss, long step) {
  if (!std::isfinite(loss)) {
    throw DivergenceError(step, "non-finite training loss");
  }
}

void maybe_clip(std::initializer_list<nn::MlpGrads*> grads, const TrainerConfig& config) {
  if (config.grad_clip > 0.0) {
    nn::clip_grads_by_norm(grads, config.grad_clip);
  }
}

// Mean reward of greedy score-sorted rankings; a progress number for the
// supervised baselines' step logs.
double greedy_batch_reward(const nn::ModelState& scorer, const AlgorithmState& state,
                           const data::Batch& batch, const TrainerConfig& config) {
  double total = 0.0;
  for (const data::QueryGroup* group : batch.groups) {
    const Eigen::VectorXd scores =
        score_group(scorer, state.scorer_spec, *group, state.feature_count, nullptr);
    const policy::RankList ranked = ranklist_from_scores(scores, {}, group->qid);
    total += serp_reward(ranked, group_grades(*group), config).value;
  }
  return batch.groups.empty() ? 0.0 : total / static_cast<double>(batch.groups.size());
}

// Actor scores for one SERP state: shared scorer per column, tanh on top,
// padding slots forced to zero action.  `raw_tanh` receives the unmasked tanh
// values needed for the backward pass.
Eigen::VectorXd actor_action(const nn::ModelState& actor, const AlgorithmState& state,
                             const SerpState& serp, nn::Tape* tape,
                             Eigen::VectorXd* raw_tanh) {
  const Eigen::MatrixXd out = mlp_forward(actor, state.scorer_spec, serp.features, tape);
  const int k = static_cast<int>(serp.mask.size());
  Eigen::VectorXd action(k);
  for (int i = 0; i < k; ++i) {
    const double t = std::tanh(out(0, i));
    if (raw_tanh != nullptr) (*raw_tanh)[i] = t;
    action[i] = serp.mask[static_cast<std::size_t>(i)] != 0 ? t : 0.0;
  }
  return action;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kPgRank: return "pgrank";
    case Algorithm::kReinforceTopK: return "reinforce_topk";
    case Algorithm::kDdpg: return "ddpg";
    case Algorithm::kBcq: return "bcq";
    case Algorithm::kOracleCe: return "oracle_ce";
    case Algorithm::kOracleLambdaRank: return "oracle_lambdarank";
  }
  throw ArgumentError("unknown algorithm");
}

Algorithm algorithm_from_string(const std::string& name) {
  for (Algorithm a : all_algorithms()) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown algorithm '" + name + "'");
}

std::vector<Algorithm> all_algorithms() {
  return {Algorithm::kPgRank,   Algorithm::kReinforceTopK, Algorithm::kDdpg,
          Algorithm::kBcq,      Algorithm::kOracleCe,      Algorithm::kOracleLambdaRank};
}

std::string reward_metric_name(RewardMetric metric, int cutoff) {
  return (metric == RewardMetric::kNdcg ? "ndcg@" : "err@") + std::to_string(cutoff);
}

void parse_reward_metric(const std::string& name, RewardMetric& metric, int& cutoff) {
  const auto at = name.find('@');
  if (at == std::string::npos) throw ConfigError("reward metric must look like 'ndcg@10'");
  const std::string head = name.substr(0, at);
  if (head == "ndcg") {
    metric = RewardMetric::kNdcg;
  } else if (head == "err") {
    metric = RewardMetric::kErr;
  } else {
    throw ConfigError("unknown reward metric '" + head + "'");
  }
  try {
    cutoff = std::stoi(name.substr(at + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad reward cutoff in '" + name + "'");
  }
  if (cutoff < 1) throw ConfigError("reward cutoff must be >= 1");
}

std::string to_string(DdpgTransition transition) {
  switch (transition) {
    case DdpgTransition::kEpisodic: return "episodic";
    case DdpgTransition::kBatchChain: return "batch-chain";
  }
  throw ArgumentError("unknown transition mode");
}

DdpgTransition ddpg_transition_from_string(const std::string& name) {
  if (name == "episodic") return DdpgTransition::kEpisodic;
  if (name == "batch-chain" || name == "batch_chain") return DdpgTransition::kBatchChain;
  throw ConfigError("unknown transition mode '" + name + "'");
}

void TrainerConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0,1]");
  if (tau_soft < 0.0 || tau_soft > 1.0) throw ConfigError("tau_soft must lie in [0,1]");
  if (lambda_mix < 0.0 || lambda_mix > 1.0) throw ConfigError("lambda_mix must lie in [0,1]");
  if (tau_temp <= 0.0) throw ConfigError("tau_temp must be positive");
  if (phi <= 0.0) throw ConfigError("phi must be positive");
  if (m_samples < 1) throw ConfigError("m_samples must be >= 1");
  if (rank_list_size < 1) throw ConfigError("rank_list_size must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (reward_cutoff < 1) throw ConfigError("reward cutoff must be >= 1");
  if (sample_count < 1) throw ConfigError("sample_count must be >= 1");
  if (vae_latent < 1) throw ConfigError("vae_latent must be >= 1");
  for (int h : scorer_hidden) {
    if (h < 1) throw ConfigError("scorer hidden dims must be >= 1");
  }
  for (int h : critic_hidden) {
    if (h < 1) throw ConfigError("critic hidden dims must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

AlgorithmState init_algorithm(const TrainerConfig& config, int feature_count, Rng& rng) {
  config.validate();
  if (feature_count < 1) throw ArgumentError("feature_count must be >= 1");
  AlgorithmState state;
  state.algorithm = config.algorithm;
  state.feature_count = feature_count;

  state.scorer_spec.input_dim = feature_count;
  state.scorer_spec.hidden = config.scorer_hidden;
  state.scorer_spec.output_dim = 1;
  state.scorer_spec.output_activation = nn::OutputActivation::kIdentity;
  state.scorer = nn::init_mlp(state.scorer_spec, rng);

  const int k = config.rank_list_size;
  state.critic_spec.input_dim = k * feature_count + k;
  state.critic_spec.hidden = config.critic_hidden;
  state.critic_spec.output_dim = 1;
  state.critic_spec.output_activation = nn::OutputActivation::kIdentity;

  if (config.algorithm == Algorithm::kDdpg) {
    state.critic = nn::init_mlp(state.critic_spec, rng);
    state.actor_target = state.scorer;
    state.critic_target = state.critic;
  } else if (config.algorithm == Algorithm::kBcq) {
    state.vae_spec.state_dim = k * feature_count;
    state.vae_spec.latent_dim = config.vae_latent;
    state.vae_spec.encoder_hidden = config.vae_encoder_hidden;
    state.vae_spec.decoder_hidden = config.vae_decoder_hidden;
    state.vae_spec.output_dim = k;
    state.vae = nn::init_vae(state.vae_spec, rng);
    state.perturb_net_spec = nn::perturb_spec(k * feature_count, k, config.perturb_hidden);
    state.perturb = nn::init_mlp(state.perturb_net_spec, rng);
    state.critic1 = nn::init_mlp(state.critic_spec, rng);
    state.critic2 = nn::init_mlp(state.critic_spec, rng);
    state.perturb_target = state.perturb;
    state.critic1_target = state.critic1;
    state.critic2_target = state.critic2;
  }
  return state;
}

RewardSignal serp_reward(const policy::RankList& ranklist, const std::vector<int>& grades,
                         const TrainerConfig& config) {
  std::vector<int> ranked;
  ranked.reserve(ranklist.positions.size());
  for (int p : ranklist.positions) {
    if (p < 0 || static_cast<std::size_t>(p) >= grades.size()) {
      throw ContractError("ranklist position " + std::to_string(p) +
                          " escapes the real-document range");
    }
    ranked.push_back(grades[static_cast<std::size_t>(p)]);
  }
  RewardSignal signal;
  signal.metric = config.reward_metric;
  signal.cutoff = config.reward_cutoff;
  signal.value = config.reward_metric == RewardMetric::kNdcg
                     ? metrics::ndcg_at_k(ranked, grades, config.reward_cutoff)
                     : metrics::err_at_k(ranked, config.reward_cutoff);
  return signal;
}

SerpState make_serp_state(const data::QueryGroup& group, int k, int feature_count) {
  const data::PaddedGroup padded = data::pad_or_truncate(group, k);
  SerpState serp;
  serp.qid = group.qid;
  serp.mask = padded.mask;
  serp.features = Eigen::MatrixXd::Zero(feature_count, k);
  for (int i = 0; i < k; ++i) {
    const auto& doc = padded.group.documents[static_cast<std::size_t>(i)];
    if (serp.mask[static_cast<std::size_t>(i)] != 0) {
      if (doc.features.size() != feature_count) {
        throw ShapeError("document feature size does not match model input");
      }
      serp.features.col(i) = doc.features;
      serp.grades.push_back(doc.relevance);
    }
  }
  serp.state = Eigen::VectorXd(k * feature_count);
  for (int i = 0; i < k; ++i) {
    serp.state.segment(static_cast<Eigen::Index>(i) * feature_count, feature_count) =
        serp.features.col(i);
  }
  return serp;
}

std::vector<int> rank_by_scores(const Eigen::VectorXd& scores,
                                const std::vector<std::uint8_t>& mask) {
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != scores.size()) {
    throw ShapeError("mask length does not match score vector");
  }
  std::vector<int> order;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (mask.empty() || mask[static_cast<std::size_t>(i)] != 0) {
      order.push_back(static_cast<int>(i));
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&scores](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

policy::RankList ranklist_from_scores(const Eigen::VectorXd& scores,
                                      const std::vector<std::uint8_t>& mask,
                                      const std::string& qid) {
  policy::RankList out;
  out.positions = rank_by_scores(scores, mask);
  out.query_ref = qid;
  return out;
}

// ---------------------------------------------------------------------------
// Listwise policy gradient
// ---------------------------------------------------------------------------

PgPlan make_pgrank_plan(const AlgorithmState& state, const data::Batch& batch,
                        const TrainerConfig& config, Rng& rng) {
  PgPlan plan;
  plan.ranklists.resize(batch.groups.size());
  plan.rewards.resize(batch.groups.size());
  for (std::size_t q = 0; q < batch.groups.size(); ++q) {
    const data::QueryGroup& group = *batch.groups[q];
    const Eigen::VectorXd scores =
        score_group(state.scorer, state.scorer_spec, group, state.feature_count, nullptr);
    const std::vector<int> grades = group_grades(group);
    for (int s = 0; s < config.sample_count; ++s) {
      policy::PolicyOutput draw = policy::pl_sample(scores, {}, config.rank_list_size, rng);
      draw.ranklist.query_ref = group.qid;
      plan.rewards[q].push_back(serp_reward(draw.ranklist, grades, config).value);
      plan.ranklists[q].push_back(std::move(draw.ranklist));
    }
  }
  return plan;
}

StepStats pgrank_loss(const nn::ModelState& scorer, const AlgorithmState& state,
                      const data::Batch& batch, const TrainerConfig& config, const PgPlan& plan,
                      nn::MlpGrads* grads) {
  if (plan.ranklists.size() != batch.groups.size()) {
    throw ContractError("plan does not match batch size");
  }
  const auto n_queries = static_cast<double>(batch.groups.size());
  const double total_samples = n_queries * config.sample_count;
  StepStats stats;
  for (std::size_t q = 0; q < batch.groups.size(); ++q) {
    const data::QueryGroup& group = *batch.groups[q];
    nn::Tape tape;
    const Eigen::VectorXd scores = score_group(scorer, state.scorer_spec, group,
                                               state.feature_count, grads ? &tape : nullptr);
    Eigen::VectorXd upstream = Eigen::VectorXd::Zero(scores.size());
    for (std::size_t s = 0; s < plan.ranklists[q].size(); ++s) {
      const policy::RankList& ranked = plan.ranklists[q][s];
      const double reward = plan.rewards[q][s];
      stats.loss += -policy::pl_log_prob(scores, ranked) * reward / total_samples;
      stats.mean_reward += reward / total_samples;
      if (grads != nullptr) {
        upstream += (-reward / total_samples) * policy::pl_log_prob_grad(scores, ranked);
      }
    }
    if (grads != nullptr) {
      mlp_backward(scorer, state.scorer_spec, tape, upstream.transpose(), *grads);
    }
  }
  return stats;
}

StepLog pgrank_step(AlgorithmState& state, const data::Batch& batch,
                    const TrainerConfig& config, Rng& rng) {
  const PgPlan plan = make_pgrank_plan(state, batch, config, rng);
  nn::MlpGrads grads = nn::MlpGrads::zeros_like(state.scorer);
  const StepStats stats = pgrank_loss(state.scorer, state, batch, config, plan, &grads);
  check_finite_loss(stats.loss, state.global_step + 1);
  maybe_clip({&grads}, config);
  nn::adam_step(state.scorer, grads, config.lr);
  state.global_step += 1;
  return {state.global_step, config.algorithm, stats.loss, stats.mean_reward, config.lr, 0};
}

// ---------------------------------------------------------------------------
// Top-k REINFORCE with the rank-position correction
// ---------------------------------------------------------------------------

TopkPlan make_topk_plan(const AlgorithmState& state, const data::Batch& batch,
                        const TrainerConfig& config, Rng& rng) {
  TopkPlan plan;
  for (const data::QueryGroup* group : batch.groups) {
    const Eigen::VectorXd scores =
        score_group(state.scorer, state.scorer_spec, *group, state.feature_count, nullptr);
    const Eigen::VectorXd probs = policy::softmax_temperature(scores, config.tau_temp);
    const int k = std::min<int>(config.rank_list_size,
                                static_cast<int>(group->documents.size()));
    policy::RankList ranked;
    try {
      ranked = policy::sample_with_replacement_topk(probs, k, rng, config.stall_attempts());
    } catch (const SamplingStallError& e) {
      throw SamplingStallError("query " + group->qid + ": " + e.what());
    }
    ranked.query_ref = group->qid;
    plan.rewards.push_back(serp_reward(ranked, group_grades(*group), config).value);
    plan.ranklists.push_back(std::move(ranked));
  }
  return plan;
}

StepStats reinforce_topk_loss(const nn::ModelState& scorer, const AlgorithmState& state,
                              const data::Batch& batch, const TrainerConfig& config,
                              const TopkPlan& plan, nn::MlpGrads* grads) {
  if (plan.ranklists.size() != batch.groups.size()) {
    throw ContractError("plan does not match batch size");
  }
  const auto n_queries = static_cast<double>(batch.groups.size());
  StepStats stats;
  for (std::size_t q = 0; q < batch.groups.size(); ++q) {
    const data::QueryGroup& group = *batch.groups[q];
    nn::Tape tape;
    const Eigen::VectorXd scores = score_group(scorer, state.scorer_spec, group,
                                               state.feature_count, grads ? &tape : nullptr);
    const Eigen::VectorXd probs = policy::softmax_temperature(scores, config.tau_temp);
    const double reward = plan.rewards[q];

    // Surrogate -reward * sum_i alpha(pi_d, i): its gradient reproduces the
    // alpha-weighted log-policy update because alpha * grad(log alpha) =
    // grad(alpha).
    Eigen::VectorXd coeff = Eigen::VectorXd::Zero(scores.size());  // d alpha / d pi per doc
    double alpha_sum = 0.0;
    const auto& positions = plan.ranklists[q].positions;
    for (std::size_t r = 0; r < positions.size(); ++r) {
      const int doc = positions[r];
      const int rank = static_cast<int>(r) + 1;
      alpha_sum += policy::topk_correction(probs[doc], rank);
      coeff[doc] += rank * std::pow(1.0 - probs[doc], rank - 1);
    }
    stats.loss += -reward * alpha_sum / n_queries;
    stats.mean_reward += reward / n_queries;
    if (grads != nullptr) {
      // d pi_d / d s_e = pi_d (delta_de - pi_e) / tau, contracted with coeff.
      const double mix = coeff.dot(probs);
      Eigen::VectorXd upstream =
          (-reward / (n_queries * config.tau_temp)) *
          (coeff.cwiseProduct(probs) - mix * probs);
      mlp_backward(scorer, state.scorer_spec, tape, upstream.transpose(), *grads);
    }
  }
  return stats;
}

StepLog reinforce_topk_step(AlgorithmState& state, const data::Batch& batch,
                            const TrainerConfig& config, Rng& rng) {
  const TopkPlan plan = make_topk_plan(state, batch, config, rng);
  nn::MlpGrads grads = nn::MlpGrads::zeros_like(state.scorer);
  const StepStats stats = reinforce_topk_loss(state.scorer, state, batch, config, plan, &grads);
  check_finite_loss(stats.loss, state.global_step + 1);
  maybe_clip({&grads}, config);
  nn::adam_step(state.scorer, grads, config.lr);
  state.global_step += 1;
  return {state.global_step, config.algorithm, stats.loss, stats.mean_reward, config.lr, 0};
}

// ---------------------------------------------------------------------------
// Deterministic actor-critic
// ---------------------------------------------------------------------------

DdpgPlan make_ddpg_plan(const AlgorithmState& state, const data::Batch& batch,
                        const TrainerConfig& config) {
  DdpgPlan plan;
  const std::size_t n = batch.groups.size();
  for (const data::QueryGroup* group : batch.groups) {
    SerpState serp = make_serp_state(*group, config.rank_list_size, state.feature_count);
    Eigen::VectorXd raw(config.rank_list_size);
    const Eigen::VectorXd action = actor_action(state.scorer, state, serp, nullptr, &raw);
    const policy::RankList ranked = ranklist_from_scores(action, serp.mask, serp.qid);
    plan.rewards.push_back(serp_reward(ranked, serp.grades, config).value);
    plan.actions.push_back(action);
    plan.states.push_back(std::move(serp));
  }
  for (std::size_t q = 0; q < n; ++q) {
    double bootstrap = 0.0;
    if (config.ddpg_transition == DdpgTransition::kBatchChain && q + 1 < n) {
      const SerpState& next = plan.states[q + 1];
      Eigen::VectorXd raw(config.rank_list_size);
      const Eigen::VectorXd next_action =
          actor_action(state.actor_target, state, next, nullptr, &raw);
      bootstrap = critic_value(state.critic_target, state, next, next_action, nullptr);
    }
    plan.targets.push_back(plan.rewards[q] + config.gamma * bootstrap);
  }
  return plan;
}

StepStats ddpg_critic_loss(const nn::ModelState& critic, const AlgorithmState& state,
                           const TrainerConfig& config, const DdpgPlan& plan,
                           nn::MlpGrads* grads) {
  (void)config;
  const auto n = static_cast<double>(plan.states.size());
  StepStats stats;
  for (std::size_t q = 0; q < plan.states.size(); ++q) {
    nn::Tape tape;
    const double value =
        critic_value(critic, state, plan.states[q], plan.actions[q], grads ? &tape : nullptr);
    const double diff = value - plan.targets[q];
    stats.loss += diff * diff / n;
    stats.mean_reward += plan.rewards[q] / n;
    if (grads != nullptr) {
      Eigen::MatrixXd upstream(1, 1);
      upstream(0, 0) = 2.0 * diff / n;
      mlp_backward(critic, state.critic_spec, tape, upstream, *grads);
    }
  }
  return stats;
}

double ddpg_actor_objective(const nn::ModelState& actor, const AlgorithmState& state,
                            const TrainerConfig& config, const DdpgPlan& plan,
                            nn::MlpGrads* grads) {
  const auto n = static_cast<double>(plan.states.size());
  const int k = config.rank_list_size;
  double objective = 0.0;
  nn::MlpGrads critic_scratch;  // the critic stays frozen; its grads are discarded
  for (const SerpState& serp : plan.states) {
    nn::Tape actor_tape;
    Eigen::VectorXd raw(k);
    const Eigen::VectorXd action =
        actor_action(actor, state, serp, grads ? &actor_tape : nullptr, &raw);
    nn::Tape critic_tape;
    const double value =
        critic_value(state.critic, state, serp, action, grads ? &critic_tape : nullptr);
    objective += value / n;
    if (grads != nullptr) {
      Eigen::MatrixXd upstream(1, 1);
      upstream(0, 0) = -1.0 / n;  // descend on the negated objective
      const Eigen::MatrixXd d_input =
          mlp_backward(state.critic, state.critic_spec, critic_tape, upstream, critic_scratch);
      Eigen::MatrixXd d_raw(1, k);
      for (int i = 0; i < k; ++i) {
        const double d_action = d_input(serp.state.size() + i, 0);
        d_raw(0, i) = serp.mask[static_cast<std::size_t>(i)] != 0
                          ? d_action * (1.0 - raw[i] * raw[i])
                          : 0.0;
      }
      mlp_backward(actor, state.scorer_spec, actor_tape, d_raw, *grads);
    }
  }
  return objective;
}

StepLog ddpg_step(AlgorithmState& state, const data::Batch& batch, const TrainerConfig& config,
                  Rng& rng) {
  (void)rng;  // the deterministic policy draws nothing
  const DdpgPlan plan = make_ddpg_plan(state, batch, config);

  nn::MlpGrads critic_grads = nn::MlpGrads::zeros_like(state.critic);
  const StepStats stats = ddpg_critic_loss(state.critic, state, config, plan, &critic_grads);
  check_finite_loss(stats.loss, state.global_step + 1);
  maybe_clip({&critic_grads}, config);
  nn::adam_step(state.critic, critic_grads, config.lr);

  nn::MlpGrads actor_grads = nn::MlpGrads::zeros_like(state.scorer);
  const double objective = ddpg_actor_objective(state.scorer, state, config, plan, &actor_grads);
  check_finite_loss(objective, state.global_step + 1);
  maybe_clip({&actor_grads}, config);
  nn::adam_step(state.scorer, actor_grads, config.lr);

  nn::soft_update(state.actor_target, state.scorer, config.tau_soft);
  nn::soft_update(state.critic_target, state.critic, config.tau_soft);
  state.global_step += 1;
  return {state.global_step, config.algorithm, stats.loss, stats.mean_reward, config.lr, 0};
}

// ---------------------------------------------------------------------------
// Batch-constrained Q-learning
// ---------------------------------------------------------------------------

BcqPlan make_bcq_plan(const AlgorithmState& state, const data::Batch& batch,
                      const TrainerConfig& config, Rng& rng) {
  BcqPlan plan;
  for (const data::QueryGroup* group : batch.groups) {
    SerpState serp = make_serp_state(*group, config.rank_list_size, state.feature_count);

    Eigen::VectorXd xi(state.vae_spec.latent_dim);
    for (int i = 0; i < xi.size(); ++i) xi[i] = rng.normal();
    const nn::VaeForward forward =
        nn::vae_forward_with_noise(state.vae, state.vae_spec, serp.state, xi);
    Eigen::VectorXd action = forward.scores;
    for (int i = 0; i < action.size(); ++i) {
      if (serp.mask[static_cast<std::size_t>(i)] == 0) action[i] = 0.0;
    }

    policy::PolicyOutput draw;
    try {
      draw = policy::pl_sample(forward.scores, serp.mask, config.rank_list_size, rng);
    } catch (const EmptyDatasetError& e) {
      throw EmptyDatasetError("query " + serp.qid + ": " + e.what());
    }
    draw.ranklist.query_ref = serp.qid;
    const double reward = serp_reward(draw.ranklist, serp.grades, config).value;

    // Frozen double-Q target from m generated-and-perturbed candidates,
    // valued by the target networks.
    double delta = -std::numeric_limits<double>::infinity();
    for (int m = 0; m < config.m_samples; ++m) {
      Eigen::VectorXd z(state.vae_spec.latent_dim);
      for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
      Eigen::VectorXd candidate = generator_scores(state.vae, state, serp, z);
      candidate += bounded_perturbation(state.perturb_target, state, serp, candidate,
                                        config.phi, nullptr);
      const double q1 = critic_value(state.critic1_target, state, serp, candidate, nullptr);
      const double q2 = critic_value(state.critic2_target, state, serp, candidate, nullptr);
      delta = std::max(delta, config.lambda_mix * std::min(q1, q2) +
                                  (1.0 - config.lambda_mix) * std::max(q1, q2));
    }
    plan.targets.push_back(reward + config.effective_alpha_td() * delta);
    plan.rewards.push_back(reward);
    plan.xi.push_back(std::move(xi));
    plan.sampled.push_back(std::move(draw.ranklist));
    plan.actions.push_back(std::move(action));
    plan.states.push_back(std::move(serp));
  }
  return plan;
}

StepStats bcq_vae_loss(const nn::VaeState& vae, const AlgorithmState& state,
                       const TrainerConfig& config, const BcqPlan& plan, nn::VaeGrads* grads) {
  (void)config;
  const auto n = static_cast<double>(plan.states.size());
  StepStats stats;
  for (std::size_t q = 0; q < plan.states.size(); ++q) {
    const SerpState& serp = plan.states[q];
    nn::VaeTape tape;
    const nn::VaeForward forward = nn::vae_forward_with_noise(
        vae, state.vae_spec, serp.state, plan.xi[q], grads ? &tape : nullptr);
    const double reward = plan.rewards[q];
    const double lp = policy::pl_log_prob(forward.scores, plan.sampled[q], serp.mask);
    stats.loss += (-lp * reward + forward.kl) / n;
    stats.mean_reward += reward / n;
    if (grads != nullptr) {
      const Eigen::VectorXd d_scores =
          (-reward / n) * policy::pl_log_prob_grad(forward.scores, plan.sampled[q], serp.mask);
      nn::vae_backward(vae, state.vae_spec, tape, d_scores, 1.0 / n, *grads);
    }
  }
  return stats;
}

StepStats bcq_critic_loss(const nn::ModelState& critic, const AlgorithmState& state,
                          const TrainerConfig& config, const BcqPlan& plan,
                          nn::MlpGrads* grads) {
  (void)config;
  const auto n = static_cast<double>(plan.states.size());
  StepStats stats;
  for (std::size_t q = 0; q < plan.states.size(); ++q) {
    nn::Tape tape;
    const double value =
        critic_value(critic, state, plan.states[q], plan.actions[q], grads ? &tape : nullptr);
    const double diff = value - plan.targets[q];
    stats.loss += diff * diff / n;
    stats.mean_reward += plan.rewards[q] / n;
    if (grads != nullptr) {
      Eigen::MatrixXd upstream(1, 1);
      upstream(0, 0) = 2.0 * diff / n;
      mlp_backward(critic, state.critic_spec, tape, upstream, *grads);
    }
  }
  return stats;
}

double bcq_perturb_objective(const nn::ModelState& perturb, const AlgorithmState& state,
                             const TrainerConfig& config, const BcqPlan& plan,
                             nn::MlpGrads* grads) {
  const auto n = static_cast<double>(plan.states.size());
  const int k = config.rank_list_size;
  double objective = 0.0;
  nn::MlpGrads critic_scratch;
  for (std::size_t q = 0; q < plan.states.size(); ++q) {
    const SerpState& serp = plan.states[q];
    nn::Tape perturb_tape;
    const Eigen::VectorXd noise = bounded_perturbation(
        perturb, state, serp, plan.actions[q], config.phi, grads ? &perturb_tape : nullptr);
    nn::Tape critic_tape;
    const double value = critic_value(state.critic1, state, serp, plan.actions[q] + noise,
                                      grads ? &critic_tape : nullptr);
    objective += value / n;
    if (grads != nullptr) {
      Eigen::MatrixXd upstream(1, 1);
      upstream(0, 0) = -1.0 / n;
      const Eigen::MatrixXd d_input = mlp_backward(state.critic1, state.critic_spec,
                                                   critic_tape, upstream, critic_scratch);
      // Through noise = phi * tanh_net(...): scale by phi, zero padding slots;
      // the tanh derivative itself lives inside mlp_backward.
      Eigen::MatrixXd d_net(k, 1);
      for (int i = 0; i < k; ++i) {
        const double d_noise = d_input(serp.state.size() + i, 0);
        d_net(i, 0) = serp.mask[static_cast<std::size_t>(i)] != 0 ? d_noise * config.phi : 0.0;
      }
      mlp_backward(perturb, state.perturb_net_spec, perturb_tape, d_net, *grads);
    }
  }
  return objective;
}

StepLog bcq_step(AlgorithmState& state, const data::Batch& batch, const TrainerConfig& config,
                 Rng& rng) {
  const BcqPlan plan = make_bcq_plan(state, batch, config, rng);

  nn::VaeGrads vae_grads;
  vae_grads.encoder = nn::MlpGrads::zeros_like(state.vae.encoder);
  vae_grads.decoder = nn::MlpGrads::zeros_like(state.vae.decoder);
  const StepStats vae_stats = bcq_vae_loss(state.vae, state, config, plan, &vae_grads);
  check_finite_loss(vae_stats.loss, state.global_step + 1);
  maybe_clip({&vae_grads.encoder, &vae_grads.decoder}, config);
  nn::adam_step(state.vae.encoder, vae_grads.encoder, config.lr);
  nn::adam_step(state.vae.decoder, vae_grads.decoder, config.lr);

  double critic_loss_sum = 0.0;
  for (nn::ModelState* critic : {&state.critic1, &state.critic2}) {
    nn::MlpGrads grads = nn::MlpGrads::zeros_like(*critic);
    const StepStats stats = bcq_critic_loss(*critic, state, config, plan, &grads);
    check_finite_loss(stats.loss, state.global_step + 1);
    maybe_clip({&grads}, config);
    nn::adam_step(*critic, grads, config.lr);
    critic_loss_sum += stats.loss;
  }

  nn::MlpGrads perturb_grads = nn::MlpGrads::zeros_like(state.perturb);
  const double objective = bcq_perturb_objective(state.perturb, state, config, plan,
                                                 &perturb_grads);
  check_finite_loss(objective, state.global_step + 1);
  maybe_clip({&perturb_grads}, config);
  nn::adam_step(state.perturb, perturb_grads, config.lr);

  nn::soft_update(state.critic1_target, state.critic1, config.tau_soft);
  nn::soft_update(state.critic2_target, state.critic2, config.tau_soft);
  nn::soft_update(state.perturb_target, state.perturb, config.tau_soft);
  state.global_step += 1;

  double mean_reward = 0.0;
  for (double r : plan.rewards) mean_reward += r;
  if (!plan.rewards.empty()) mean_reward /= static_cast<double>(plan.rewards.size());
  return {state.global_step, config.algorithm, critic_loss_sum / 2.0, mean_reward, config.lr, 0};
}

// ---------------------------------------------------------------------------
// Supervised baselines
// ---------------------------------------------------------------------------

StepStats oracle_ce_loss(const nn::ModelState& scorer, const AlgorithmState& state,
                         const data::Batch& batch, const TrainerConfig& config,
                         nn::MlpGrads* grads) {
  (void)config;
  StepStats stats;
  int contributing = 0;
  struct GroupWork {
    nn::Tape tape;
    Eigen::VectorXd upstream;
  };
  std::vector<GroupWork> work;
  for (const data::QueryGroup* group : batch.groups) {
    GroupWork w;
    const Eigen::VectorXd scores = score_group(scorer, state.scorer_spec, *group,
                                               state.feature_count, grads ? &w.tape : nullptr);
    const std::vector<int> grades = group_grades(*group);
    const double grade_sum = std::accumulate(grades.begin(), grades.end(), 0.0);
    if (grade_sum <= 0.0) {
      stats.skipped_groups += 1;  // label attention undefined for all-zero groups
      continue;
    }
    ++contributing;
    Eigen::VectorXd positive(scores.size());
    for (Eigen::Index i = 0; i < scores.size(); ++i) positive[i] = softplus(scores[i]);
    const double total = positive.sum();
    double loss = 0.0;
    w.upstream = Eigen::VectorXd::Zero(scores.size());
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      const double label_attention = grades[static_cast<std::size_t>(i)] / grade_sum;
      loss += label_attention * (std::log(total) - std::log(positive[i]));
      if (grads != nullptr) {
        w.upstream[i] = (1.0 / total - label_attention / positive[i]) * sigmoid(scores[i]);
      }
    }
    stats.loss += loss;
    if (grads != nullptr) work.push_back(std::move(w));
  }
  if (contributing > 0) {
    stats.loss /= contributing;
    if (grads != nullptr) {
      for (GroupWork& w : work) {
        w.upstream /= contributing;
        mlp_backward(scorer, state.scorer_spec, w.tape, w.upstream.transpose(), *grads);
      }
    }
  }
  return stats;
}

StepLog oracle_ce_step(AlgorithmState& state, const data::Batch& batch,
                       const TrainerConfig& config) {
  nn::MlpGrads grads = nn::MlpGrads::zeros_like(state.scorer);
  const StepStats stats = oracle_ce_loss(state.scorer, state, batch, config, &grads);
  check_finite_loss(stats.loss, state.global_step + 1);
  maybe_clip({&grads}, config);
  nn::adam_step(state.scorer, grads, config.lr);
  state.global_step += 1;
  const double reward = greedy_batch_reward(state.scorer, state, batch, config);
  return {state.global_step, config.algorithm, stats.loss, reward, config.lr, 0};
}

StepStats oracle_lambdarank_loss(const nn::ModelState& scorer, const AlgorithmState& state,
                                 const data::Batch& batch, const TrainerConfig& config,
                                 nn::MlpGrads* grads) {
  const auto n = static_cast<double>(batch.groups.size());
  StepStats stats;
  for (const data::QueryGroup* group : batch.groups) {
    nn::Tape tape;
    const Eigen::VectorXd scores = score_group(scorer, state.scorer_spec, *group,
                                               state.feature_count, grads ? &tape : nullptr);
    const std::vector<int> grades = group_grades(*group);
    const std::vector<int> order = rank_by_scores(scores);
    std::vector<int> ranked_grades(order.size());
    std::vector<std::size_t> position_of(order.size());
    for (std::size_t p = 0; p < order.size(); ++p) {
      ranked_grades[p] = grades[static_cast<std::size_t>(order[p])];
      position_of[static_cast<std::size_t>(order[p])] = p;
    }
    Eigen::VectorXd upstream = Eigen::VectorXd::Zero(scores.size());
    for (std::size_t i = 0; i < grades.size(); ++i) {
      for (std::size_t j = 0; j < grades.size(); ++j) {
        if (grades[i] <= grades[j]) continue;  // only pairs where i is more relevant
        const double weight = metrics::delta_ndcg(grades, ranked_grades, position_of[i],
                                                  position_of[j], config.rank_list_size);
        const double margin = scores[static_cast<Eigen::Index>(i)] -
                              scores[static_cast<Eigen::Index>(j)];
        stats.loss += weight * pairwise_logistic(margin) / n;
        if (grads != nullptr) {
          const double d_margin = weight * (sigmoid(margin) - 1.0) / n;
          upstream[static_cast<Eigen::Index>(i)] += d_margin;
          upstream[static_cast<Eigen::Index>(j)] -= d_margin;
        }
      }
    }
    if (grads != nullptr) {
      mlp_backward(scorer, state.scorer_spec, tape, upstream.transpose(), *grads);
    }
  }
  return stats;
}

StepLog oracle_lambdarank_step(AlgorithmState& state, const data::Batch& batch,
                               const TrainerConfig& config) {
  nn::MlpGrads grads = nn::MlpGrads::zeros_like(state.scorer);
  const StepStats stats = oracle_lambdarank_loss(state.scorer, state, batch, config, &grads);
  check_finite_loss(stats.loss, state.global_step + 1);
  maybe_clip({&grads}, config);
  nn::adam_step(state.scorer, grads, config.lr);
  state.global_step += 1;
  const double reward = greedy_batch_reward(state.scorer, state, batch, config);
  return {state.global_step, config.algorithm, stats.loss, reward, config.lr, 0};
}

StepLog train_step(AlgorithmState& state, const data::Batch& batch,
                   const TrainerConfig& config, Rng& rng) {
  if (state.algorithm != config.algorithm) {
    throw ContractError("state was initialized for " + to_string(state.algorithm) +
                        ", config selects " + to_string(config.algorithm));
  }
  switch (config.algorithm) {
    case Algorithm::kPgRank: return pgrank_step(state, batch, config, rng);
    case Algorithm::kReinforceTopK: return reinforce_topk_step(state, batch, config, rng);
    case Algorithm::kDdpg: return ddpg_step(state, batch, config, rng);
    case Algorithm::kBcq: return bcq_step(state, batch, config, rng);
    case Algorithm::kOracleCe: return oracle_ce_step(state, batch, config);
    case Algorithm::kOracleLambdaRank: return oracle_lambdarank_step(state, batch, config);
  }
  throw ArgumentError("unknown algorithm");
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void save_algorithm_state(const std::string& path, const AlgorithmState& state) {
  nlohmann::ordered_json payload;
  payload["algorithm"] = to_string(state.algorithm);
  payload["feature_count"] = state.feature_count;
  payload["global_step"] = state.global_step;
  payload["scorer_spec"] = nn::to_json(state.scorer_spec);
  payload["scorer"] = nn::to_json(state.scorer);
  if (state.algorithm == Algorithm::kDdpg) {
    payload["critic_spec"] = nn::to_json(state.critic_spec);
    payload["critic"] = nn::to_json(state.critic);
    payload["actor_target"] = nn::to_json(state.actor_target);
    payload["critic_target"] = nn::to_json(state.critic_target);
  } else if (state.algorithm == Algorithm::kBcq) {
    payload["critic_spec"] = nn::to_json(state.critic_spec);
    payload["vae_spec"] = nn::to_json(state.vae_spec);
    payload["vae"] = nn::to_json(state.vae);
    payload["perturb_spec"] = nn::to_json(state.perturb_net_spec);
    payload["perturb"] = nn::to_json(state.perturb);
    payload["perturb_target"] = nn::to_json(state.perturb_target);
    payload["critic1"] = nn::to_json(state.critic1);
    payload["critic2"] = nn::to_json(state.critic2);
    payload["critic1_target"] = nn::to_json(state.critic1_target);
    payload["critic2_target"] = nn::to_json(state.critic2_target);
  }
  nn::write_json_atomic(path, nn::make_checkpoint("algorithm_state", std::move(payload)));
}

AlgorithmState load_algorithm_state(const std::string& path) {
  const nlohmann::json payload =
      nn::open_checkpoint(nn::read_json_file(path), "algorithm_state");
  AlgorithmState state;
  try {
    state.algorithm = algorithm_from_string(payload.at("algorithm").get<std::string>());
    state.feature_count = payload.at("feature_count").get<int>();
    state.global_step = payload.at("global_step").get<long>();
    state.scorer_spec = nn::mlp_spec_from_json(payload.at("scorer_spec"));
    state.scorer = nn::model_state_from_json(payload.at("scorer"));
    if (state.algorithm == Algorithm::kDdpg) {
      state.critic_spec = nn::mlp_spec_from_json(payload.at("critic_spec"));
      state.critic = nn::model_state_from_json(payload.at("critic"));
      state.actor_target = nn::model_state_from_json(payload.at("actor_target"));
      state.critic_target = nn::model_state_from_json(payload.at("critic_target"));
    } else if (state.algorithm == Algorithm::kBcq) {
      state.critic_spec = nn::mlp_spec_from_json(payload.at("critic_spec"));
      state.vae_spec = nn::vae_spec_from_json(payload.at("vae_spec"));
      state.vae = nn::vae_state_from_json(payload.at("vae"));
      state.perturb_net_spec = nn::mlp_spec_from_json(payload.at("perturb_spec"));
      state.perturb = nn::model_state_from_json(payload.at("perturb"));
      state.perturb_target = nn::model_state_from_json(payload.at("perturb_target"));
      state.critic1 = nn::model_state_from_json(payload.at("critic1"));
      state.critic2 = nn::model_state_from_json(payload.at("critic2"));
      state.critic1_target = nn::model_state_from_json(payload.at("critic1_target"));
      state.critic2_target = nn::model_state_from_json(payload.at("critic2_target"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad algorithm state: ") + e.what());
  }
  return state;
}

}  // namespace serprank::train
