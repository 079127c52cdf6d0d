#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridball/rng.hpp"

// Dense-network numerics for the training loops: forward pass, reverse-mode
// gradients over a fixed torso+heads topology, Adam with global-norm gradient
// clipping, and masked categorical sampling. Doubles throughout; everything
// is deterministic given the seed.

namespace gridball::net {

enum class Activation : uint8_t { kLeakyRelu = 0, kLinear = 1 };

inline constexpr double kLeakyReluSlope = 0.01;

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(int r, int c)
      : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

using Vector = std::vector<double>;

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kLinear;
};

// A stack of dense layers; consecutive dimensions chain.
struct Mlp {
  std::vector<DenseLayer> layers;

  bool empty() const { return layers.empty(); }
  int input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows; }
};

struct MlpTrace {
  std::vector<Vector> inputs;   // inputs[k] feeds layer k
  std::vector<Vector> preacts;  // W x + b before the activation
  Vector output;
};

struct NetConfig {
  int observation_dim = 0;
  int action_count = 0;
  int torso_width = 128;
  int head_width = 64;
  int torso_layers = 3;
  int head_layers = 3;
  bool separate_value = false;     // value path reads the global observation
  int global_observation_dim = 0;  // required when separate_value
  bool intrinsic_heads = false;    // adds intrinsic value head + predictor/target pair
  int rnd_hidden = 64;
  int rnd_embedding_dim = 32;

  bool operator==(const NetConfig&) const = default;
};

struct PolicyValueNet {
  NetConfig config;
  Mlp torso;
  Mlp policy_head;
  Mlp value_torso;  // only when config.separate_value
  Mlp value_head;
  Mlp intrinsic_value_head;  // only when config.intrinsic_heads
  Mlp predict_net;           // only when config.intrinsic_heads
  Mlp target_net;            // frozen after initialization
};

// Seeded orthogonal-style init: orthonormalized Gaussian weights scaled per
// layer, zero biases.
PolicyValueNet MakeNet(const NetConfig& config, Rng& rng);

struct ForwardTrace {
  MlpTrace torso;
  MlpTrace policy;
  MlpTrace value_torso;
  MlpTrace value;
  MlpTrace intrinsic;
  Vector logits;
  double value_out = 0.0;
  double intrinsic_value_out = 0.0;
};

// Policy/value forward pass. global_observation feeds the value path when the
// net was built with separate_value; otherwise it is ignored and may be empty.
// Throws std::invalid_argument on dimension mismatch.
ForwardTrace Forward(const PolicyValueNet& net, std::span<const double> observation,
                     std::span<const double> global_observation = {});

struct HeadGradients {
  Vector d_logits;  // empty means zero
  double d_value = 0.0;
  double d_intrinsic_value = 0.0;
};

size_t ParameterCount(const PolicyValueNet& net);
void FlattenParameters(const PolicyValueNet& net, std::span<double> out);
std::vector<double> FlattenParameters(const PolicyValueNet& net);
void SetParameters(PolicyValueNet& net, std::span<const double> flat);

// Offset of the frozen target-net segment within the flat layout; equals
// ParameterCount when the net has no target net.
size_t TargetNetOffset(const PolicyValueNet& net);

// Accumulates loss gradients into grad (flat layout, FlattenParameters
// order). The trace must come from Forward on this net.
void Backprop(const PolicyValueNet& net, const ForwardTrace& trace,
              const HeadGradients& heads, std::span<double> grad);

// Predictor/target embeddings for the state-familiarity signal.
struct RndTrace {
  MlpTrace predict;
  Vector predict_out;
  Vector target_out;
};
RndTrace RndForward(const PolicyValueNet& net, std::span<const double> observation);

// Accumulates d(prediction loss)/d(predictor params); d_embed is the loss
// gradient w.r.t. the predictor output. Target-net gradients are identically
// zero by construction.
void BackpropPredictor(const PolicyValueNet& net, const RndTrace& trace,
                       std::span<const double> d_embed, std::span<double> grad);

struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 10.0;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  int64_t step_count = 0;
};

AdamState MakeAdamState(size_t parameter_count);

// Clips the gradient by global norm, then applies one bias-corrected Adam
// update in place. Returns false (params and state untouched) when the
// gradient contains non-finite values.
bool AdamStep(std::span<double> params, std::span<const double> grads, AdamState& state,
              const AdamConfig& config);

struct ActionSample {
  int action = 0;
  double log_prob = 0.0;
};

// Masked softmax sampling; masked-out actions get probability exactly zero.
// mask may be null (all actions legal). Throws std::invalid_argument when
// every action is masked or temperature <= 0.
ActionSample SampleAction(std::span<const double> logits, const std::vector<uint8_t>* mask,
                          double temperature, Rng& rng);
int GreedyAction(std::span<const double> logits, const std::vector<uint8_t>* mask);

// Log-probabilities of the masked softmax; masked entries are -infinity.
Vector MaskedLogSoftmax(std::span<const double> logits, const std::vector<uint8_t>* mask,
                        double temperature);

// Checkpoint payload file: versioned header (format version + caller metadata)
// followed by the flat parameter arrays per layer in declaration order.
// Round-trips bit-exactly.
void SavePayload(const std::string& path, const PolicyValueNet& net,
                 const std::string& metadata_json);

struct LoadedPayload {
  PolicyValueNet net;
  std::string metadata_json;
};
LoadedPayload LoadPayload(const std::string& path);

}  // namespace gridball::net
