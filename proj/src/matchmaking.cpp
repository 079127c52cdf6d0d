#include "gridball/matchmaking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

using nlohmann::json;

namespace gridball::mm {

void PairStats::Record(int64_t opponent, Outcome outcome) {
  auto& r = table_[opponent];
  r.wins *= decay_;
  r.draws *= decay_;
  r.losses *= decay_;
  r.games = r.games * decay_ + 1.0;
  switch (outcome) {
    case Outcome::kWin: r.wins += 1.0; break;
    case Outcome::kDraw: r.draws += 1.0; break;
    case Outcome::kLoss: r.losses += 1.0; break;
  }
}

double PairStats::WinRate(int64_t opponent) const {
  const auto it = table_.find(opponent);
  if (it == table_.end() || it->second.games <= 0.0) return 0.5;
  return it->second.wins / it->second.games;
}

double PairStats::DrawRate(int64_t opponent) const {
  const auto it = table_.find(opponent);
  if (it == table_.end() || it->second.games <= 0.0) return 0.0;
  return it->second.draws / it->second.games;
}

double PairStats::Games(int64_t opponent) const {
  const auto it = table_.find(opponent);
  return it == table_.end() ? 0.0 : it->second.games;
}

std::string PairStats::ToJson() const {
  json j;
  j["decay"] = decay_;
  auto rows = json::array();
  for (const auto& [id, r] : table_) {
    rows.push_back({{"opponent", id},
                    {"wins", r.wins},
                    {"draws", r.draws},
                    {"losses", r.losses},
                    {"games", r.games}});
  }
  j["rows"] = std::move(rows);
  return j.dump();
}

PairStats PairStats::FromJson(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("corrupt pair stats: ") + e.what());
  }
  PairStats stats(j.at("decay").get<double>());
  for (const auto& row : j.at("rows")) {
    Record_ r;
    r.wins = row.at("wins").get<double>();
    r.draws = row.at("draws").get<double>();
    r.losses = row.at("losses").get<double>();
    r.games = row.at("games").get<double>();
    stats.table_[row.at("opponent").get<int64_t>()] = r;
  }
  return stats;
}

bool PairStats::operator==(const PairStats& other) const {
  if (decay_ != other.decay_ || table_.size() != other.table_.size()) return false;
  for (const auto& [id, r] : table_) {
    const auto it = other.table_.find(id);
    if (it == other.table_.end()) return false;
    if (r.wins != it->second.wins || r.draws != it->second.draws ||
        r.losses != it->second.losses || r.games != it->second.games) {
      return false;
    }
  }
  return true;
}

double HardnessScore(double win_rate, double draw_rate, double exponent) {
  const double base = std::max(0.0, 1.0 - win_rate - 0.5 * draw_rate);
  return std::pow(base, exponent);
}

std::vector<double> PoolSelectionProbs(const std::vector<size_t>& pool_sizes, double alpha) {
  size_t total = 0;
  for (size_t n : pool_sizes) total += n;
  std::vector<double> out(pool_sizes.size(), 0.0);
  if (total == 0) return out;
  for (size_t i = 0; i < pool_sizes.size(); ++i) {
    out[i] = (1.0 - alpha) * static_cast<double>(pool_sizes[i]) /
             static_cast<double>(total);
  }
  return out;
}

std::vector<double> OpponentProbs(const std::vector<int64_t>& pool_entries,
                                  const PairStats& stats, double pool_prob,
                                  double temperature, double exponent) {
  if (pool_entries.empty()) throw std::invalid_argument("pool must be nonempty");
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  std::vector<double> scores(pool_entries.size());
  double max_s = -1e300;
  for (size_t i = 0; i < pool_entries.size(); ++i) {
    scores[i] = HardnessScore(stats.WinRate(pool_entries[i]),
                              stats.DrawRate(pool_entries[i]), exponent) /
                temperature;
    max_s = std::max(max_s, scores[i]);
  }
  double z = 0.0;
  for (double s : scores) z += std::exp(s - max_s);
  std::vector<double> out(pool_entries.size());
  for (size_t i = 0; i < pool_entries.size(); ++i) {
    out[i] = pool_prob * std::exp(scores[i] - max_s) / z;
  }
  return out;
}

double OpponentDistribution::TotalMass() const {
  double acc = self_probability;
  for (const auto& e : entries) acc += e.probability;
  return acc;
}

OpponentDistribution BuildDistribution(const std::vector<pools::PoolView>& visible,
                                       const PairStats& stats, const MsmConfig& config) {
  OpponentDistribution dist;
  std::vector<size_t> sizes;
  sizes.reserve(visible.size());
  size_t total = 0;
  for (const auto& pool : visible) {
    sizes.push_back(pool.size());
    total += pool.size();
  }
  if (total == 0) {
    dist.self_probability = 1.0;  // no history yet: all mass on self-play
    return dist;
  }
  dist.self_probability = config.alpha;
  if (config.uniform_random) {
    // Ablation arm: uniform over every visible history model.
    const double p = (1.0 - config.alpha) / static_cast<double>(total);
    for (const auto& pool : visible) {
      for (int64_t id : pool.entries) {
        dist.entries.push_back({pool.kind, pool.owner, id, p, stats.WinRate(id),
                                stats.DrawRate(id),
                                HardnessScore(stats.WinRate(id), stats.DrawRate(id),
                                              config.exponent)});
      }
    }
    return dist;
  }
  const auto pool_probs = PoolSelectionProbs(sizes, config.alpha);
  for (size_t i = 0; i < visible.size(); ++i) {
    const auto& pool = visible[i];
    if (pool.entries.empty()) continue;
    const auto probs = OpponentProbs(pool.entries, stats, pool_probs[i],
                                     config.temperature, config.exponent);
    for (size_t j = 0; j < pool.entries.size(); ++j) {
      const int64_t id = pool.entries[j];
      dist.entries.push_back({pool.kind, pool.owner, id, probs[j], stats.WinRate(id),
                              stats.DrawRate(id),
                              HardnessScore(stats.WinRate(id), stats.DrawRate(id),
                                            config.exponent)});
    }
  }
  return dist;
}

std::optional<DistributionEntry> SampleOpponent(const OpponentDistribution& distribution,
                                                Rng& rng) {
  const double u = rng.Uniform() * distribution.TotalMass();
  double acc = distribution.self_probability;
  if (u < acc) return std::nullopt;
  for (const auto& e : distribution.entries) {
    acc += e.probability;
    if (u < acc) return e;
  }
  if (!distribution.entries.empty()) return distribution.entries.back();
  return std::nullopt;
}

void ExportDistributionCsv(const OpponentDistribution& distribution,
                           const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open distribution csv: " + path);
  os << "pool,owner,checkpoint_id,win_rate,draw_rate,score,probability\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "self,,,,,,%.17g\n", distribution.self_probability);
  os << buf;
  for (const auto& e : distribution.entries) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%lld,%.17g,%.17g,%.17g,%.17g\n",
                  pools::PoolKindName(e.pool), e.pool_owner.c_str(),
                  static_cast<long long>(e.checkpoint_id), e.win_rate, e.draw_rate,
                  e.score, e.probability);
    os << buf;
  }
}

}  // namespace gridball::mm
