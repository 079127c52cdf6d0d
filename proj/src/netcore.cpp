#include "gridball/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace gridball::net {

namespace {

Matrix OrthogonalMatrix(int rows, int cols, double gain, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.Gaussian();
  // Gram-Schmidt over the shorter side.
  const bool by_rows = rows <= cols;
  const int n = by_rows ? rows : cols;
  const int dim = by_rows ? cols : rows;
  auto get = [&](int i, int j) -> double& { return by_rows ? m.at(i, j) : m.at(j, i); };
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < i; ++k) {
      double dot = 0.0;
      for (int j = 0; j < dim; ++j) dot += get(i, j) * get(k, j);
      for (int j = 0; j < dim; ++j) get(i, j) -= dot * get(k, j);
    }
    double norm = 0.0;
    for (int j = 0; j < dim; ++j) norm += get(i, j) * get(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      for (int j = 0; j < dim; ++j) get(i, j) = rng.Gaussian();
      --i;
      continue;
    }
    for (int j = 0; j < dim; ++j) get(i, j) /= norm;
  }
  for (auto& v : m.data) v *= gain;
  return m;
}

Mlp MakeMlp(int in, int hidden, int out, int n_layers, Activation last_act,
            double last_gain, Rng& rng) {
  Mlp mlp;
  for (int k = 0; k < n_layers; ++k) {
    const bool is_last = k == n_layers - 1;
    const int d_in = (k == 0) ? in : hidden;
    const int d_out = is_last ? out : hidden;
    DenseLayer layer;
    layer.weight = OrthogonalMatrix(d_out, d_in, is_last ? last_gain : std::sqrt(2.0), rng);
    layer.bias.assign(d_out, 0.0);
    layer.activation = is_last ? last_act : Activation::kLeakyRelu;
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

double ApplyActivation(Activation act, double z) {
  return (act == Activation::kLeakyRelu && z < 0.0) ? kLeakyReluSlope * z : z;
}

double ActivationDerivative(Activation act, double z) {
  return (act == Activation::kLeakyRelu && z < 0.0) ? kLeakyReluSlope : 1.0;
}

void MlpForward(const Mlp& mlp, std::span<const double> in, MlpTrace& trace) {
  trace.inputs.clear();
  trace.preacts.clear();
  Vector x(in.begin(), in.end());
  for (const auto& layer : mlp.layers) {
    if (static_cast<int>(x.size()) != layer.weight.cols) {
      throw std::invalid_argument("layer input dimension mismatch: got " +
                                  std::to_string(x.size()) + ", expected " +
                                  std::to_string(layer.weight.cols));
    }
    trace.inputs.push_back(x);
    Vector z(layer.weight.rows);
    for (int r = 0; r < layer.weight.rows; ++r) {
      double acc = layer.bias[r];
      const double* w = &layer.weight.data[static_cast<size_t>(r) * layer.weight.cols];
      for (int c = 0; c < layer.weight.cols; ++c) acc += w[c] * x[c];
      z[r] = acc;
    }
    trace.preacts.push_back(z);
    x.resize(z.size());
    for (size_t i = 0; i < z.size(); ++i) x[i] = ApplyActivation(layer.activation, z[i]);
  }
  trace.output = x;
}

size_t MlpParameterCount(const Mlp& mlp) {
  size_t n = 0;
  for (const auto& layer : mlp.layers) {
    n += layer.weight.data.size() + layer.bias.size();
  }
  return n;
}

// Backprop through one mlp. d_out is consumed; gradients are accumulated into
// grad starting at `offset` (weight then bias per layer, declaration order).
// When d_input is non-null the gradient w.r.t. the mlp input is stored there.
void MlpBackprop(const Mlp& mlp, const MlpTrace& trace, Vector d_out,
                 std::span<double> grad, size_t offset, Vector* d_input) {
  // Per-layer offsets within this mlp.
  std::vector<size_t> layer_offset(mlp.layers.size());
  {
    size_t at = offset;
    for (size_t k = 0; k < mlp.layers.size(); ++k) {
      layer_offset[k] = at;
      at += mlp.layers[k].weight.data.size() + mlp.layers[k].bias.size();
    }
  }
  for (int k = static_cast<int>(mlp.layers.size()) - 1; k >= 0; --k) {
    const auto& layer = mlp.layers[k];
    const auto& z = trace.preacts[k];
    const auto& x = trace.inputs[k];
    Vector dz(layer.weight.rows);
    for (int r = 0; r < layer.weight.rows; ++r) {
      dz[r] = d_out[r] * ActivationDerivative(layer.activation, z[r]);
    }
    double* gw = &grad[layer_offset[k]];
    double* gb = gw + layer.weight.data.size();
    for (int r = 0; r < layer.weight.rows; ++r) {
      double* row = gw + static_cast<size_t>(r) * layer.weight.cols;
      const double dzr = dz[r];
      for (int c = 0; c < layer.weight.cols; ++c) row[c] += dzr * x[c];
      gb[r] += dzr;
    }
    if (k > 0 || d_input != nullptr) {
      Vector dx(layer.weight.cols, 0.0);
      for (int r = 0; r < layer.weight.rows; ++r) {
        const double dzr = dz[r];
        const double* w = &layer.weight.data[static_cast<size_t>(r) * layer.weight.cols];
        for (int c = 0; c < layer.weight.cols; ++c) dx[c] += dzr * w[c];
      }
      if (k == 0) {
        if (d_input != nullptr) *d_input = std::move(dx);
      } else {
        d_out = std::move(dx);
      }
    }
  }
}

// Declaration order of the parameter-bearing mlps.
template <typename Net, typename Fn>
void ForEachMlp(Net& net, Fn&& fn) {
  fn(net.torso);
  fn(net.policy_head);
  if (net.config.separate_value) fn(net.value_torso);
  fn(net.value_head);
  if (net.config.intrinsic_heads) {
    fn(net.intrinsic_value_head);
    fn(net.predict_net);
    fn(net.target_net);
  }
}

size_t MlpOffset(const PolicyValueNet& net, const Mlp& target) {
  size_t offset = 0;
  bool found = false;
  ForEachMlp(net, [&](const Mlp& m) {
    if (found) return;
    if (&m == &target) {
      found = true;
      return;
    }
    offset += MlpParameterCount(m);
  });
  if (!found) throw std::logic_error("mlp not part of this net");
  return offset;
}

template <typename T>
void WritePod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void ReadPod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint payload truncated");
}

constexpr uint32_t kPayloadMagic = 0x50424247;  // "GBBP"
constexpr uint32_t kPayloadVersion = 1;

}  // namespace

PolicyValueNet MakeNet(const NetConfig& config, Rng& rng) {
  if (config.observation_dim <= 0 || config.action_count <= 0) {
    throw std::invalid_argument("net config requires positive observation/action dims");
  }
  if (config.separate_value && config.global_observation_dim <= 0) {
    throw std::invalid_argument("separate value path requires a global observation dim");
  }
  PolicyValueNet net;
  net.config = config;
  net.torso = MakeMlp(config.observation_dim, config.torso_width, config.torso_width,
                      config.torso_layers, Activation::kLeakyRelu, std::sqrt(2.0), rng);
  net.policy_head = MakeMlp(config.torso_width, config.head_width, config.action_count,
                            config.head_layers, Activation::kLinear, 0.01, rng);
  if (config.separate_value) {
    net.value_torso = MakeMlp(config.global_observation_dim, config.torso_width,
                              config.torso_width, config.torso_layers,
                              Activation::kLeakyRelu, std::sqrt(2.0), rng);
  }
  net.value_head = MakeMlp(config.torso_width, config.head_width, 1, config.head_layers,
                           Activation::kLinear, 1.0, rng);
  if (config.intrinsic_heads) {
    net.intrinsic_value_head = MakeMlp(config.torso_width, config.head_width, 1,
                                       config.head_layers, Activation::kLinear, 1.0, rng);
    net.predict_net = MakeMlp(config.observation_dim, config.rnd_hidden,
                              config.rnd_embedding_dim, 3, Activation::kLinear, 1.0, rng);
    net.target_net = MakeMlp(config.observation_dim, config.rnd_hidden,
                             config.rnd_embedding_dim, 3, Activation::kLinear, 1.0, rng);
  }
  return net;
}

ForwardTrace Forward(const PolicyValueNet& net, std::span<const double> observation,
                     std::span<const double> global_observation) {
  if (static_cast<int>(observation.size()) != net.config.observation_dim) {
    throw std::invalid_argument("observation length " + std::to_string(observation.size()) +
                                " does not match network input dimension " +
                                std::to_string(net.config.observation_dim));
  }
  ForwardTrace trace;
  MlpForward(net.torso, observation, trace.torso);
  MlpForward(net.policy_head, trace.torso.output, trace.policy);
  trace.logits = trace.policy.output;
  if (net.config.separate_value) {
    if (static_cast<int>(global_observation.size()) != net.config.global_observation_dim) {
      throw std::invalid_argument("global observation length does not match value input");
    }
    MlpForward(net.value_torso, global_observation, trace.value_torso);
    MlpForward(net.value_head, trace.value_torso.output, trace.value);
  } else {
    MlpForward(net.value_head, trace.torso.output, trace.value);
  }
  trace.value_out = trace.value.output[0];
  if (net.config.intrinsic_heads) {
    MlpForward(net.intrinsic_value_head, trace.torso.output, trace.intrinsic);
    trace.intrinsic_value_out = trace.intrinsic.output[0];
  }
  return trace;
}

size_t ParameterCount(const PolicyValueNet& net) {
  size_t n = 0;
  ForEachMlp(net, [&](const Mlp& m) { n += MlpParameterCount(m); });
  return n;
}

void FlattenParameters(const PolicyValueNet& net, std::span<double> out) {
  if (out.size() != ParameterCount(net)) {
    throw std::invalid_argument("flatten buffer size mismatch");
  }
  size_t at = 0;
  ForEachMlp(net, [&](const Mlp& m) {
    for (const auto& layer : m.layers) {
      std::copy(layer.weight.data.begin(), layer.weight.data.end(), out.begin() + at);
      at += layer.weight.data.size();
      std::copy(layer.bias.begin(), layer.bias.end(), out.begin() + at);
      at += layer.bias.size();
    }
  });
}

std::vector<double> FlattenParameters(const PolicyValueNet& net) {
  std::vector<double> flat(ParameterCount(net));
  FlattenParameters(net, flat);
  return flat;
}

void SetParameters(PolicyValueNet& net, std::span<const double> flat) {
  if (flat.size() != ParameterCount(net)) {
    throw std::invalid_argument("parameter vector size mismatch");
  }
  size_t at = 0;
  ForEachMlp(net, [&](Mlp& m) {
    for (auto& layer : m.layers) {
      std::copy(flat.begin() + at, flat.begin() + at + layer.weight.data.size(),
                layer.weight.data.begin());
      at += layer.weight.data.size();
      std::copy(flat.begin() + at, flat.begin() + at + layer.bias.size(),
                layer.bias.begin());
      at += layer.bias.size();
    }
  });
}

size_t TargetNetOffset(const PolicyValueNet& net) {
  if (!net.config.intrinsic_heads) return ParameterCount(net);
  return MlpOffset(net, net.target_net);
}

void Backprop(const PolicyValueNet& net, const ForwardTrace& trace,
              const HeadGradients& heads, std::span<double> grad) {
  if (grad.size() != ParameterCount(net)) {
    throw std::invalid_argument("gradient buffer size mismatch");
  }
  Vector d_torso(net.config.torso_width, 0.0);
  bool torso_touched = false;
  if (!heads.d_logits.empty()) {
    if (static_cast<int>(heads.d_logits.size()) != net.config.action_count) {
      throw std::invalid_argument("logit gradient length mismatch");
    }
    Vector d_in;
    MlpBackprop(net.policy_head, trace.policy, heads.d_logits, grad,
                MlpOffset(net, net.policy_head), &d_in);
    for (size_t i = 0; i < d_in.size(); ++i) d_torso[i] += d_in[i];
    torso_touched = true;
  }
  if (heads.d_value != 0.0) {
    Vector d_in;
    MlpBackprop(net.value_head, trace.value, Vector{heads.d_value}, grad,
                MlpOffset(net, net.value_head), &d_in);
    if (net.config.separate_value) {
      MlpBackprop(net.value_torso, trace.value_torso, std::move(d_in), grad,
                  MlpOffset(net, net.value_torso), nullptr);
    } else {
      for (size_t i = 0; i < d_in.size(); ++i) d_torso[i] += d_in[i];
      torso_touched = true;
    }
  }
  if (heads.d_intrinsic_value != 0.0) {
    if (!net.config.intrinsic_heads) {
      throw std::invalid_argument("intrinsic gradient on a net without intrinsic heads");
    }
    Vector d_in;
    MlpBackprop(net.intrinsic_value_head, trace.intrinsic, Vector{heads.d_intrinsic_value},
                grad, MlpOffset(net, net.intrinsic_value_head), &d_in);
    for (size_t i = 0; i < d_in.size(); ++i) d_torso[i] += d_in[i];
    torso_touched = true;
  }
  if (torso_touched) {
    MlpBackprop(net.torso, trace.torso, std::move(d_torso), grad, MlpOffset(net, net.torso),
                nullptr);
  }
}

RndTrace RndForward(const PolicyValueNet& net, std::span<const double> observation) {
  if (!net.config.intrinsic_heads) {
    throw std::invalid_argument("net has no predictor/target pair");
  }
  RndTrace trace;
  MlpForward(net.predict_net, observation, trace.predict);
  trace.predict_out = trace.predict.output;
  MlpTrace target_trace;
  MlpForward(net.target_net, observation, target_trace);
  trace.target_out = target_trace.output;
  return trace;
}

void BackpropPredictor(const PolicyValueNet& net, const RndTrace& trace,
                       std::span<const double> d_embed, std::span<double> grad) {
  if (grad.size() != ParameterCount(net)) {
    throw std::invalid_argument("gradient buffer size mismatch");
  }
  MlpBackprop(net.predict_net, trace.predict, Vector(d_embed.begin(), d_embed.end()), grad,
              MlpOffset(net, net.predict_net), nullptr);
}

AdamState MakeAdamState(size_t parameter_count) {
  AdamState state;
  state.first_moment.assign(parameter_count, 0.0);
  state.second_moment.assign(parameter_count, 0.0);
  return state;
}

bool AdamStep(std::span<double> params, std::span<const double> grads, AdamState& state,
              const AdamConfig& config) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam shapes do not match");
  }
  double norm_sq = 0.0;
  for (double g : grads) {
    if (!std::isfinite(g)) return false;
    norm_sq += g * g;
  }
  const double norm = std::sqrt(norm_sq);
  const double scale =
      (config.grad_clip_norm > 0.0 && norm > config.grad_clip_norm)
          ? config.grad_clip_norm / norm
          : 1.0;
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] * scale;
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
  return true;
}

Vector MaskedLogSoftmax(std::span<const double> logits, const std::vector<uint8_t>* mask,
                        double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (mask != nullptr && mask->size() != logits.size()) {
    throw std::invalid_argument("mask length does not match logits");
  }
  double max_l = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    max_l = std::max(max_l, logits[i] / temperature);
  }
  if (!std::isfinite(max_l)) throw std::invalid_argument("all actions masked");
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    z += std::exp(logits[i] / temperature - max_l);
  }
  const double log_z = std::log(z);
  Vector out(logits.size(), -std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    out[i] = logits[i] / temperature - max_l - log_z;
  }
  return out;
}

ActionSample SampleAction(std::span<const double> logits, const std::vector<uint8_t>* mask,
                          double temperature, Rng& rng) {
  const Vector log_probs = MaskedLogSoftmax(logits, mask, temperature);
  const double u = rng.Uniform();
  double acc = 0.0;
  int last_legal = -1;
  for (size_t i = 0; i < log_probs.size(); ++i) {
    if (!std::isfinite(log_probs[i])) continue;
    last_legal = static_cast<int>(i);
    acc += std::exp(log_probs[i]);
    if (u < acc) return {static_cast<int>(i), log_probs[i]};
  }
  // Rounding can leave acc marginally below 1; fall back to the last legal action.
  return {last_legal, log_probs[last_legal]};
}

int GreedyAction(std::span<const double> logits, const std::vector<uint8_t>* mask) {
  int best = -1;
  double best_l = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    if (best < 0 || logits[i] > best_l) {
      best = static_cast<int>(i);
      best_l = logits[i];
    }
  }
  if (best < 0) throw std::invalid_argument("all actions masked");
  return best;
}

void SavePayload(const std::string& path, const PolicyValueNet& net,
                 const std::string& metadata_json) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint payload for writing: " + path);
  WritePod(os, kPayloadMagic);
  WritePod(os, kPayloadVersion);
  const auto& c = net.config;
  WritePod<int32_t>(os, c.observation_dim);
  WritePod<int32_t>(os, c.action_count);
  WritePod<int32_t>(os, c.torso_width);
  WritePod<int32_t>(os, c.head_width);
  WritePod<int32_t>(os, c.torso_layers);
  WritePod<int32_t>(os, c.head_layers);
  WritePod<uint8_t>(os, c.separate_value ? 1 : 0);
  WritePod<int32_t>(os, c.global_observation_dim);
  WritePod<uint8_t>(os, c.intrinsic_heads ? 1 : 0);
  WritePod<int32_t>(os, c.rnd_hidden);
  WritePod<int32_t>(os, c.rnd_embedding_dim);
  WritePod<uint64_t>(os, metadata_json.size());
  os.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
  ForEachMlp(net, [&](const Mlp& m) {
    WritePod<uint32_t>(os, static_cast<uint32_t>(m.layers.size()));
    for (const auto& layer : m.layers) {
      WritePod<uint32_t>(os, static_cast<uint32_t>(layer.weight.rows));
      WritePod<uint32_t>(os, static_cast<uint32_t>(layer.weight.cols));
      WritePod<uint8_t>(os, static_cast<uint8_t>(layer.activation));
      os.write(reinterpret_cast<const char*>(layer.weight.data.data()),
               static_cast<std::streamsize>(layer.weight.data.size() * sizeof(double)));
      os.write(reinterpret_cast<const char*>(layer.bias.data()),
               static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
    }
  });
  if (!os) throw std::runtime_error("failed writing checkpoint payload: " + path);
}

LoadedPayload LoadPayload(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint payload: " + path);
  uint32_t magic = 0, version = 0;
  ReadPod(is, magic);
  if (magic != kPayloadMagic) {
    throw std::runtime_error("not a checkpoint payload (bad magic): " + path);
  }
  ReadPod(is, version);
  if (version != kPayloadVersion) {
    throw std::runtime_error("unsupported checkpoint payload version " +
                             std::to_string(version) + ": " + path);
  }
  LoadedPayload loaded;
  NetConfig c;
  int32_t i32 = 0;
  uint8_t u8 = 0;
  ReadPod(is, i32);
  c.observation_dim = i32;
  ReadPod(is, i32);
  c.action_count = i32;
  ReadPod(is, i32);
  c.torso_width = i32;
  ReadPod(is, i32);
  c.head_width = i32;
  ReadPod(is, i32);
  c.torso_layers = i32;
  ReadPod(is, i32);
  c.head_layers = i32;
  ReadPod(is, u8);
  c.separate_value = u8 != 0;
  ReadPod(is, i32);
  c.global_observation_dim = i32;
  ReadPod(is, u8);
  c.intrinsic_heads = u8 != 0;
  ReadPod(is, i32);
  c.rnd_hidden = i32;
  ReadPod(is, i32);
  c.rnd_embedding_dim = i32;
  uint64_t meta_len = 0;
  ReadPod(is, meta_len);
  loaded.metadata_json.resize(meta_len);
  is.read(loaded.metadata_json.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw std::runtime_error("checkpoint payload truncated: " + path);
  loaded.net.config = c;
  ForEachMlp(loaded.net, [&](Mlp& m) {
    uint32_t n_layers = 0;
    ReadPod(is, n_layers);
    m.layers.resize(n_layers);
    for (auto& layer : m.layers) {
      uint32_t rows = 0, cols = 0;
      uint8_t act = 0;
      ReadPod(is, rows);
      ReadPod(is, cols);
      ReadPod(is, act);
      layer.weight = Matrix(static_cast<int>(rows), static_cast<int>(cols));
      layer.activation = static_cast<Activation>(act);
      is.read(reinterpret_cast<char*>(layer.weight.data.data()),
              static_cast<std::streamsize>(layer.weight.data.size() * sizeof(double)));
      layer.bias.assign(rows, 0.0);
      is.read(reinterpret_cast<char*>(layer.bias.data()),
              static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
      if (!is) throw std::runtime_error("checkpoint payload truncated: " + path);
    }
  });
  return loaded;
}

}  // namespace gridball::net
