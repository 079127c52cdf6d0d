#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridball/pools.hpp"
#include "gridball/rng.hpp"

// Opponent sampling: self-play with probability alpha, otherwise a history
// model chosen by pool size and a per-model hardness softmax over win/draw
// rates against the current training model.

namespace gridball::mm {

enum class Outcome : uint8_t { kWin = 0, kDraw = 1, kLoss = 2 };

// Per-opponent running win/draw/loss record with exponential decay so stale
// results fade as the training model improves.
class PairStats {
 public:
  explicit PairStats(double decay = 0.99) : decay_(decay) {}

  void Record(int64_t opponent, Outcome outcome);
  // Unseen opponents report the neutral prior: w = 0.5, d = 0.
  double WinRate(int64_t opponent) const;
  double DrawRate(int64_t opponent) const;
  double Games(int64_t opponent) const;
  size_t OpponentCount() const { return table_.size(); }

  std::string ToJson() const;
  static PairStats FromJson(const std::string& text);
  bool operator==(const PairStats& other) const;

 private:
  struct Record_ {
    double wins = 0.0, draws = 0.0, losses = 0.0, games = 0.0;
  };
  double decay_;
  std::map<int64_t, Record_> table_;
};

struct MsmConfig {
  double alpha = 0.6;        // self-play probability
  double temperature = 0.3;  // softmax temperature over hardness scores
  double exponent = 1.0;     // exponent p on (1 - w - 0.5 d)
  bool uniform_random = false;  // ablation: uniform over history models at the same alpha
};

// Hardness score for Eq-style sampling: (1 - w - 0.5 d)^p.
double HardnessScore(double win_rate, double draw_rate, double exponent);

// p_i = (1 - alpha) * n_i / n_total; all zeros when every pool is empty.
std::vector<double> PoolSelectionProbs(const std::vector<size_t>& pool_sizes, double alpha);

// Within-pool probabilities: softmax[(1-w-0.5d)^p / T] scaled by pool_prob.
std::vector<double> OpponentProbs(const std::vector<int64_t>& pool_entries,
                                  const PairStats& stats, double pool_prob,
                                  double temperature, double exponent);

struct DistributionEntry {
  pools::PoolKind pool;
  std::string pool_owner;
  int64_t checkpoint_id;
  double probability;
  double win_rate;
  double draw_rate;
  double score;
};

struct OpponentDistribution {
  double self_probability = 1.0;
  std::vector<DistributionEntry> entries;
  double TotalMass() const;
};

OpponentDistribution BuildDistribution(const std::vector<pools::PoolView>& visible,
                                       const PairStats& stats, const MsmConfig& config);

// Categorical draw over {self} and every history entry; nullopt means self.
std::optional<DistributionEntry> SampleOpponent(const OpponentDistribution& distribution,
                                                Rng& rng);

// CSV rows: pool, owner, checkpoint_id, win_rate, draw_rate, score, probability.
void ExportDistributionCsv(const OpponentDistribution& distribution,
                           const std::string& path);

}  // namespace gridball::mm
