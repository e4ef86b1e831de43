#pragma once

// Attention U-Net: encoder/decoder with attention-gated skip connections and a
// single output logit per pixel. Templated on the scalar type: float for
// training, double for gradient verification.

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bpseg/tensor.hpp"

namespace bpseg {

struct NetworkConfig {
  int base_channels = 16;
  /// Resolution levels; depth - 1 pooling steps.
  int depth = 5;
  int in_channels = 1;
  int out_channels = 1;
  /// Gate inner width = max(1, channels / attention_reduction).
  int attention_reduction = 2;
  std::uint64_t seed = 1;

  void validate() const;
  /// Throws ShapeMismatch unless both dims divide by 2^(depth-1).
  void check_input(int height, int width) const;
  int channels(int level) const noexcept { return base_channels << level; }
  int gate_width(int level) const noexcept;
  bool operator==(const NetworkConfig&) const = default;
};

template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  /// Running normalization statistics are state, not trainable weights.
  bool trainable = true;

  std::size_t numel() const noexcept { return value.size(); }
};

template <typename T>
class ModelParams {
 public:
  NetworkConfig config;
  std::vector<Parameter<T>> entries;

  std::size_t index_of(const std::string& name) const;
  Parameter<T>& operator[](const std::string& name) { return entries[index_of(name)]; }
  const Parameter<T>& operator[](const std::string& name) const { return entries[index_of(name)]; }

  std::size_t trainable_count() const noexcept;
  void zero_grad() noexcept;
  bool all_finite() const noexcept;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    for (const auto& p : entries) {
      Parameter<U> q;
      q.name = p.name;
      q.shape = p.shape;
      q.trainable = p.trainable;
      q.value.assign(p.value.begin(), p.value.end());
      q.grad.assign(p.grad.size(), U{});
      out.entries.push_back(std::move(q));
    }
    return out;
  }

  bool operator==(const ModelParams& o) const;
};

/// Architecture instantiation with fan-in scaled uniform initialization,
/// U(-sqrt(6 / fan_in), sqrt(6 / fan_in)), drawn from cfg.seed.
template <typename T>
ModelParams<T> build_model(const NetworkConfig& cfg);

/// Closed-form trainable parameter count for a configuration.
std::size_t trainable_parameter_count(const NetworkConfig& cfg);

enum class Mode {
  /// Batch statistics in normalization; running statistics are updated.
  kTrain,
  /// Running statistics; deterministic per image.
  kInference,
};

/// Weights of one attention gate, all 1x1 convolutions.
template <typename T>
struct GateWeights {
  int channels = 0;
  int inner = 0;
  const T* wx = nullptr;    // inner x channels
  const T* wg = nullptr;    // inner x channels
  const T* bias = nullptr;  // inner
  const T* psi = nullptr;   // inner
  T psi_bias{};
};

template <typename T>
struct GateOutput {
  Tensor<T> gated;
  /// N x 1 x H x W coefficients in (0, 1).
  Tensor<T> alpha;
};

/// q = ReLU(Wx x + Wg g + b); alpha = sigmoid(psi q + b_psi); gated = alpha * x.
template <typename T>
GateOutput<T> attention_gate(const Tensor<T>& x, const Tensor<T>& g, const GateWeights<T>& weights);

/// Forward/backward engine bound to a parameter set. Activations from the last
/// forward pass are cached for backward().
template <typename T>
class Network {
 public:
  explicit Network(ModelParams<T>& params);
  ~Network();
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  /// input: N x in_channels x H x W intensities in [0, 1].
  /// Throws ShapeMismatch or NonFiniteActivation.
  const Tensor<T>& forward(const Tensor<T>& input, Mode mode);

  /// Accumulates parameter gradients for d loss / d logits of the last forward.
  void backward(const Tensor<T>& grad_logits);

  /// Attention coefficients of decoder level `level` from the last forward.
  const Tensor<T>& attention(int level) const;

  ModelParams<T>& params() noexcept { return *params_; }

 private:
  struct Impl;
  ModelParams<T>* params_;
  std::unique_ptr<Impl> impl_;
};

/// Inference-mode forward pass without keeping the engine.
template <typename T>
Tensor<T> forward(const ModelParams<T>& params, const Tensor<T>& input, Mode mode = Mode::kInference);

/// Number of forward passes executed by any Network in this process.
std::uint64_t forward_pass_count() noexcept;

}  // namespace bpseg
