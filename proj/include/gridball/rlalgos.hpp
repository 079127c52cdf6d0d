#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridball/netcore.hpp"

// The three training algorithms as pure loss/advantage computations plus the
// train-step driver: dual-clip PPO, RND-PPO, and MAPPO (CTDE).

namespace gridball::rl {

enum class Algorithm : uint8_t { kPpo = 0, kRndPpo = 1, kMappo = 2 };

const char* AlgorithmName(Algorithm a);
Algorithm AlgorithmFromName(const std::string& name);

// Fixed-length rollout segment. Old log-probs and values are recorded at
// sampling time from the checkpoint that acted. Sequences may cross episode
// boundaries; terminals mark the episode ends inside the segment.
struct Trajectory {
  std::vector<std::vector<double>> observations;
  std::vector<std::vector<double>> global_observations;  // value input, MAPPO only
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> rewards;
  std::vector<double> values_old;
  std::vector<uint8_t> terminals;
  std::vector<std::vector<uint8_t>> masks;  // per-step legal masks; empty when unused
  double bootstrap_value = 0.0;             // tail value; 0 when the tail is terminal

  std::vector<double> intrinsic_rewards;    // RND only
  std::vector<double> intrinsic_values_old;
  double intrinsic_bootstrap = 0.0;

  size_t size() const { return actions.size(); }
};

inline constexpr int kDefaultTrajectoryLength = 128;

struct PpoConfig {
  double epsilon = 0.2;
  double eta = 3.0;
  double gamma = 0.9995;
  double lambda = 0.95;
  double value_loss_weight = 0.5;
  double entropy_coefficient = 0.01;
  int batch_size = 4096;
  double sample_reuse = 1.0;
};

// Enforces eta > 1 + epsilon and 0 < gamma, lambda <= 1.
void ValidatePpoConfig(const PpoConfig& config);

struct RndConfig {
  double intrinsic_gamma = 0.99;
  double intrinsic_coef = 8.0;   // weight on the intrinsic advantage
  double extrinsic_coef = 2.0;   // weight on the extrinsic advantage
  double intrinsic_value_weight = 0.5;
  double prediction_weight = 1.0;
};

struct LossBreakdown {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double intrinsic_value = 0.0;
  double prediction = 0.0;
  double total = 0.0;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // values_old + advantages exactly
};

GaeResult ComputeGae(std::span<const double> rewards, std::span<const double> values_old,
                     std::span<const uint8_t> terminals, double gamma, double lambda,
                     double bootstrap_value);

// Mean over the batch of the per-sample dual-clip objective:
//   A >= 0:  -min(r A, r_clip A)
//   A <  0:  -max(min(r A, r_clip A), eta A)
double PpoDualClipPolicyLoss(std::span<const double> new_log_probs,
                             std::span<const double> old_log_probs,
                             std::span<const double> advantages, double epsilon,
                             double eta);

// Mean squared error between predicted values and returns.
double ValueLoss(std::span<const double> values_new, std::span<const double> returns);

// Squared prediction error between the predictor and frozen target embeddings
// (mean over the embedding dimension); doubles as the per-sample prediction loss.
double RndIntrinsicReward(const net::PolicyValueNet& net,
                          std::span<const double> observation);

std::vector<double> RndCombinedAdvantage(std::span<const double> extrinsic,
                                         std::span<const double> intrinsic, double c_e,
                                         double c_i);

struct RndLossParts {
  double policy = 0.0;
  double value = 0.0;
  double intrinsic_value = 0.0;
  double prediction = 0.0;
};

struct RndLossWeights {
  double value = 0.5;
  double intrinsic_value = 0.5;
  double prediction = 1.0;
};

double RndTotalLoss(const RndLossParts& parts, const RndLossWeights& weights);

// Arithmetic mean of per-player policy losses.
double MappoPolicyLoss(std::span<const double> per_player_losses);

struct TrainResult {
  LossBreakdown loss;
  bool applied = false;  // false when the batch was rejected (non-finite loss/grads)
  int samples = 0;
  double grad_norm = 0.0;  // pre-clip global norm
};

// One optimizer pass over the batch (single epoch, sample reuse ~1): GAE,
// per-batch advantage standardization, dual-clip policy loss, value loss(es),
// entropy bonus, RND prediction loss when applicable, then clipped Adam.
// Rejected batches leave net and adam untouched.
TrainResult TrainStep(net::PolicyValueNet& net, net::AdamState& adam,
                      std::span<const Trajectory> batch, Algorithm algorithm,
                      const PpoConfig& ppo, const RndConfig& rnd,
                      const net::AdamConfig& adam_config, double entropy_coefficient);

// Appends one CSV row per training step:
// step, agent, algorithm, losses, entropy coefficient.
class MetricsLog {
 public:
  MetricsLog(const std::string& path, bool append);
  void Append(int64_t step, const std::string& agent, Algorithm algorithm,
              const LossBreakdown& loss, double entropy_coefficient);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace gridball::rl
