#pragma once

#include <string>
#include <vector>

#include "serprank/common.hpp"

namespace serprank::train {

enum class Algorithm {
  kPgRank,
  kReinforceTopK,
  kDdpg,
  kBcq,
  kOracleCe,
  kOracleLambdaRank,
};

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);
std::vector<Algorithm> all_algorithms();

enum class RewardMetric { kNdcg, kErr };

// "ndcg@10", "err@5", ...
std::string reward_metric_name(RewardMetric metric, int cutoff);
void parse_reward_metric(const std::string& name, RewardMetric& metric, int& cutoff);

// How the critic's bootstrap term treats the next state: `kEpisodic` scores
// each query as a terminal one-step episode (no bootstrap); `kBatchChain`
// chains to the next query in the batch, last query bootstrapping with zero.
enum class DdpgTransition { kEpisodic, kBatchChain };

std::string to_string(DdpgTransition transition);
DdpgTransition ddpg_transition_from_string(const std::string& name);

struct TrainerConfig {
  Algorithm algorithm = Algorithm::kPgRank;
  double lr = 1e-3;
  double gamma = 0.99;        // discount on the bootstrap term
  double tau_soft = 0.99;     // retained fraction of target nets per soft update
  double tau_temp = 1.0;      // softmax temperature for the with-replacement policy
  double phi = 0.05;          // perturbation bound
  double lambda_mix = 0.75;   // min/max blend inside the clipped double-Q target
  double alpha_td = -1.0;     // weight on the temporal difference; < 0 means "use gamma"
  int m_samples = 10;         // candidate ranklists per query for the double-Q target
  int rank_list_size = 10;    // k
  int batch_size = 256;       // n
  long steps = 10000;
  int epochs = 1000;          // full-dataset passes (listwise policy-gradient schedule)
  RewardMetric reward_metric = RewardMetric::kNdcg;
  int reward_cutoff = 10;
  int sample_count = 8;       // sampled ranklists per query per gradient estimate
  DdpgTransition ddpg_transition = DdpgTransition::kEpisodic;
  double grad_clip = 0.0;     // global-norm cap; <= 0 disables

  // Architecture knobs.  The scorer shape is shared by every algorithm.
  std::vector<int> scorer_hidden{512, 256, 128};
  std::vector<int> critic_hidden{512, 256, 128};
  int vae_latent = 32;
  std::vector<int> vae_encoder_hidden{256};
  std::vector<int> vae_decoder_hidden{256};
  std::vector<int> perturb_hidden{128};

  double effective_alpha_td() const { return alpha_td < 0.0 ? gamma : alpha_td; }
  // Draw budget for with-replacement sampling before declaring a stall.
  int stall_attempts() const { return 50 * rank_list_size; }
  void validate() const;
};

}  // namespace serprank::train
