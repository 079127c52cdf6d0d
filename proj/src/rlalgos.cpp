#include "gridball/rlalgos.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace gridball::rl {

namespace {

double ClipRatio(double r, double epsilon) {
  return std::max(1.0 - epsilon, std::min(1.0 + epsilon, r));
}

// Per-sample dual-clip objective value and its derivative w.r.t. the ratio.
struct ClipTerm {
  double loss;
  double d_ratio;
};

ClipTerm DualClipTerm(double r, double adv, double epsilon, double eta) {
  const double rc = ClipRatio(r, epsilon);
  const double unclipped = r * adv;
  const double clipped = rc * adv;
  double inner;
  double inner_d;
  if (unclipped <= clipped) {
    inner = unclipped;
    inner_d = adv;
  } else {
    inner = clipped;
    inner_d = 0.0;
  }
  if (adv < 0.0) {
    const double floor = eta * adv;
    if (inner < floor) return {-floor, 0.0};
  }
  return {-inner, -inner_d};
}

}  // namespace

const char* AlgorithmName(Algorithm a) {
  switch (a) {
    case Algorithm::kPpo: return "ppo";
    case Algorithm::kRndPpo: return "rnd_ppo";
    case Algorithm::kMappo: return "mappo";
  }
  return "?";
}

Algorithm AlgorithmFromName(const std::string& name) {
  if (name == "ppo") return Algorithm::kPpo;
  if (name == "rnd_ppo") return Algorithm::kRndPpo;
  if (name == "mappo") return Algorithm::kMappo;
  throw std::invalid_argument("unknown algorithm: " + name);
}

void ValidatePpoConfig(const PpoConfig& c) {
  if (!(c.eta > 1.0 + c.epsilon)) {
    throw std::invalid_argument("dual-clip eta must exceed 1 + epsilon");
  }
  if (!(c.gamma > 0.0 && c.gamma <= 1.0) || !(c.lambda > 0.0 && c.lambda <= 1.0)) {
    throw std::invalid_argument("gamma and lambda must lie in (0, 1]");
  }
  if (c.batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
}

GaeResult ComputeGae(std::span<const double> rewards, std::span<const double> values_old,
                     std::span<const uint8_t> terminals, double gamma, double lambda,
                     double bootstrap_value) {
  const size_t n = rewards.size();
  if (values_old.size() != n || terminals.size() != n) {
    throw std::invalid_argument("gae inputs must share one length");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double carry = 0.0;
  for (size_t i = n; i-- > 0;) {
    const double next_value = (i == n - 1) ? bootstrap_value : values_old[i + 1];
    const double nonterminal = terminals[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * nonterminal - values_old[i];
    carry = delta + gamma * lambda * nonterminal * carry;
    out.advantages[i] = carry;
    out.returns[i] = values_old[i] + carry;
  }
  return out;
}

double PpoDualClipPolicyLoss(std::span<const double> new_log_probs,
                             std::span<const double> old_log_probs,
                             std::span<const double> advantages, double epsilon,
                             double eta) {
  const size_t n = new_log_probs.size();
  if (old_log_probs.size() != n || advantages.size() != n || n == 0) {
    throw std::invalid_argument("policy loss inputs must share one nonzero length");
  }
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = std::exp(new_log_probs[i] - old_log_probs[i]);
    acc += DualClipTerm(r, advantages[i], epsilon, eta).loss;
  }
  return acc / static_cast<double>(n);
}

double ValueLoss(std::span<const double> values_new, std::span<const double> returns) {
  if (values_new.size() != returns.size() || values_new.empty()) {
    throw std::invalid_argument("value loss inputs must share one nonzero length");
  }
  double acc = 0.0;
  for (size_t i = 0; i < values_new.size(); ++i) {
    const double d = values_new[i] - returns[i];
    acc += d * d;
  }
  return acc / static_cast<double>(values_new.size());
}

double RndIntrinsicReward(const net::PolicyValueNet& net,
                          std::span<const double> observation) {
  const auto trace = net::RndForward(net, observation);
  double acc = 0.0;
  for (size_t i = 0; i < trace.predict_out.size(); ++i) {
    const double d = trace.predict_out[i] - trace.target_out[i];
    acc += d * d;
  }
  return acc / static_cast<double>(trace.predict_out.size());
}

std::vector<double> RndCombinedAdvantage(std::span<const double> extrinsic,
                                         std::span<const double> intrinsic, double c_e,
                                         double c_i) {
  if (extrinsic.size() != intrinsic.size()) {
    throw std::invalid_argument("advantage streams must share one length");
  }
  std::vector<double> out(extrinsic.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = c_e * extrinsic[i] + c_i * intrinsic[i];
  return out;
}

double RndTotalLoss(const RndLossParts& parts, const RndLossWeights& weights) {
  return parts.policy + weights.value * parts.value +
         weights.intrinsic_value * parts.intrinsic_value +
         weights.prediction * parts.prediction;
}

double MappoPolicyLoss(std::span<const double> per_player_losses) {
  if (per_player_losses.empty()) {
    throw std::invalid_argument("mappo policy loss needs at least one player");
  }
  double acc = 0.0;
  for (double l : per_player_losses) acc += l;
  return acc / static_cast<double>(per_player_losses.size());
}

TrainResult TrainStep(net::PolicyValueNet& net, net::AdamState& adam,
                      std::span<const Trajectory> batch, Algorithm algorithm,
                      const PpoConfig& ppo, const RndConfig& rnd,
                      const net::AdamConfig& adam_config, double entropy_coefficient) {
  ValidatePpoConfig(ppo);
  TrainResult result;
  size_t n_samples = 0;
  for (const auto& t : batch) {
    if (t.size() == 0 || t.observations.size() != t.size() ||
        t.old_log_probs.size() != t.size() || t.rewards.size() != t.size() ||
        t.values_old.size() != t.size() || t.terminals.size() != t.size()) {
      throw std::invalid_argument("malformed trajectory");
    }
    if (algorithm == Algorithm::kMappo && t.global_observations.size() != t.size()) {
      throw std::invalid_argument("mappo trajectories need global observations");
    }
    if (algorithm == Algorithm::kRndPpo &&
        (t.intrinsic_rewards.size() != t.size() ||
         t.intrinsic_values_old.size() != t.size())) {
      throw std::invalid_argument("rnd trajectories need intrinsic streams");
    }
    n_samples += t.size();
  }
  if (n_samples == 0) throw std::invalid_argument("empty batch");
  result.samples = static_cast<int>(n_samples);

  // Advantages and value targets.
  std::vector<std::vector<double>> adv_per_traj(batch.size());
  std::vector<std::vector<double>> ret_per_traj(batch.size());
  std::vector<std::vector<double>> iret_per_traj(batch.size());
  const bool use_intrinsic = algorithm == Algorithm::kRndPpo;
  for (size_t b = 0; b < batch.size(); ++b) {
    const auto& t = batch[b];
    auto ext = ComputeGae(t.rewards, t.values_old, t.terminals, ppo.gamma, ppo.lambda,
                          t.bootstrap_value);
    ret_per_traj[b] = std::move(ext.returns);
    if (use_intrinsic) {
      // Intrinsic stream is non-episodic: terminals ignored.
      const std::vector<uint8_t> no_terminals(t.size(), 0);
      auto intr = ComputeGae(t.intrinsic_rewards, t.intrinsic_values_old, no_terminals,
                             rnd.intrinsic_gamma, ppo.lambda, t.intrinsic_bootstrap);
      iret_per_traj[b] = std::move(intr.returns);
      if (rnd.intrinsic_coef != 0.0) {
        adv_per_traj[b] =
            RndCombinedAdvantage(ext.advantages, intr.advantages, rnd.extrinsic_coef,
                                 rnd.intrinsic_coef);
      } else {
        adv_per_traj[b] = std::move(ext.advantages);
      }
    } else {
      adv_per_traj[b] = std::move(ext.advantages);
    }
  }
  // Per-batch standardization of the policy advantages.
  {
    double mean = 0.0;
    for (const auto& a : adv_per_traj)
      for (double v : a) mean += v;
    mean /= static_cast<double>(n_samples);
    double var = 0.0;
    for (const auto& a : adv_per_traj)
      for (double v : a) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n_samples);
    const double inv = 1.0 / (std::sqrt(var) + 1e-8);
    for (auto& a : adv_per_traj)
      for (double& v : a) v = (v - mean) * inv;
  }

  std::vector<double> grad(net::ParameterCount(net), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  double policy_loss = 0.0, value_loss = 0.0, entropy_sum = 0.0;
  double intrinsic_value_loss = 0.0, prediction_loss = 0.0;
  const bool train_intrinsic_value = use_intrinsic && rnd.intrinsic_value_weight != 0.0;
  const bool train_predictor = use_intrinsic && rnd.prediction_weight != 0.0;
  const int action_count = net.config.action_count;

  for (size_t b = 0; b < batch.size(); ++b) {
    const auto& t = batch[b];
    for (size_t k = 0; k < t.size(); ++k) {
      const auto& obs = t.observations[k];
      const auto trace =
          net.config.separate_value
              ? net::Forward(net, obs, t.global_observations[k])
              : net::Forward(net, obs);
      const std::vector<uint8_t>* mask = t.masks.empty() ? nullptr : &t.masks[k];
      const auto log_probs = net::MaskedLogSoftmax(trace.logits, mask, 1.0);
      const int a = t.actions[k];
      const double new_lp = log_probs[a];
      const double ratio = std::exp(new_lp - t.old_log_probs[k]);
      const double adv = adv_per_traj[b][k];
      const auto term = DualClipTerm(ratio, adv, ppo.epsilon, ppo.eta);
      policy_loss += term.loss * inv_n;
      // d(loss)/d(logit_j) via d(loss)/d(ratio) * ratio * (onehot_j - p_j),
      // plus the entropy bonus gradient.
      std::vector<double> probs(action_count, 0.0);
      double entropy = 0.0;
      for (int j = 0; j < action_count; ++j) {
        if (!std::isfinite(log_probs[j])) continue;
        probs[j] = std::exp(log_probs[j]);
        entropy -= probs[j] * log_probs[j];
      }
      entropy_sum += entropy * inv_n;
      net::HeadGradients heads;
      heads.d_logits.assign(action_count, 0.0);
      const double d_ratio = term.d_ratio * inv_n;
      for (int j = 0; j < action_count; ++j) {
        if (probs[j] == 0.0 && j != a) continue;
        const double onehot = j == a ? 1.0 : 0.0;
        double g = d_ratio * ratio * (onehot - probs[j]);
        if (entropy_coefficient != 0.0 && probs[j] > 0.0) {
          // d(-c H)/d(logit_j) = c * p_j * (log p_j + H)
          g += entropy_coefficient * probs[j] * (log_probs[j] + entropy) * inv_n;
        }
        heads.d_logits[j] = g;
      }
      const double v_diff = trace.value_out - ret_per_traj[b][k];
      value_loss += v_diff * v_diff * inv_n;
      heads.d_value = ppo.value_loss_weight * 2.0 * v_diff * inv_n;
      if (train_intrinsic_value) {
        const double iv_diff = trace.intrinsic_value_out - iret_per_traj[b][k];
        intrinsic_value_loss += iv_diff * iv_diff * inv_n;
        heads.d_intrinsic_value = rnd.intrinsic_value_weight * 2.0 * iv_diff * inv_n;
      }
      net::Backprop(net, trace, heads, grad);
      if (train_predictor) {
        const auto rt = net::RndForward(net, obs);
        const size_t dim = rt.predict_out.size();
        std::vector<double> d_embed(dim);
        double pre = 0.0;
        for (size_t j = 0; j < dim; ++j) {
          const double d = rt.predict_out[j] - rt.target_out[j];
          pre += d * d;
          d_embed[j] = rnd.prediction_weight * 2.0 * d / static_cast<double>(dim) * inv_n;
        }
        prediction_loss += pre / static_cast<double>(dim) * inv_n;
        net::BackpropPredictor(net, rt, d_embed, grad);
      }
    }
  }

  result.loss.policy = policy_loss;
  result.loss.value = value_loss;
  result.loss.entropy = entropy_sum;
  result.loss.intrinsic_value = intrinsic_value_loss;
  result.loss.prediction = prediction_loss;
  result.loss.total = policy_loss + ppo.value_loss_weight * value_loss +
                      rnd.intrinsic_value_weight * intrinsic_value_loss +
                      rnd.prediction_weight * prediction_loss -
                      entropy_coefficient * entropy_sum;
  double norm_sq = 0.0;
  for (double g : grad) norm_sq += g * g;
  result.grad_norm = std::sqrt(norm_sq);

  if (!std::isfinite(result.loss.total)) {
    result.applied = false;
    return result;
  }
  auto params = net::FlattenParameters(net);
  if (net::AdamStep(params, grad, adam, adam_config)) {
    net::SetParameters(net, params);
    result.applied = true;
  }
  return result;
}

MetricsLog::MetricsLog(const std::string& path, bool append) : path_(path) {
  if (!append) {
    std::ofstream os(path_, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open metrics log: " + path_);
    os << "step,agent,algorithm,policy_loss,value_loss,entropy,intrinsic_value_loss,"
          "prediction_loss,total_loss,entropy_coef\n";
  }
}

void MetricsLog::Append(int64_t step, const std::string& agent, Algorithm algorithm,
                        const LossBreakdown& loss, double entropy_coefficient) {
  std::ofstream os(path_, std::ios::app);
  if (!os) throw std::runtime_error("cannot append to metrics log: " + path_);
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%lld,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                static_cast<long long>(step), agent.c_str(), AlgorithmName(algorithm),
                loss.policy, loss.value, loss.entropy, loss.intrinsic_value,
                loss.prediction, loss.total, entropy_coefficient);
  os << buf;
}

}  // namespace gridball::rl
