#pragma once

// Feed-forward ReLU network with hand-derived reverse-mode gradients,
// decoupled-weight-decay Adam, and power-iteration spectral normalization.
//
// Batches are stored column-per-sample: an input batch is (input_size x B)
// and the output batch is (output_size x B).

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nkcme::net {

enum class HeadKind { linear, relu, softmax_per_group };

struct Head {
  HeadKind kind = HeadKind::linear;
  int group_size = 0;  // only meaningful for softmax_per_group

  static Head linear() { return {HeadKind::linear, 0}; }
  static Head relu() { return {HeadKind::relu, 0}; }
  static Head softmax(int group_size) { return {HeadKind::softmax_per_group, group_size}; }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Intermediate values of a batched forward pass, consumed by backward().
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;        // input to each layer
  std::vector<Eigen::MatrixXd> preactivation;  // W a + b of each layer
  Eigen::MatrixXd output;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  void set_zero();
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

/// Named view onto one contiguous parameter tensor.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  bool weight_decay = true;
};

class Mlp {
 public:
  Mlp() = default;

  /// layer_sizes = {input, hidden..., output}. Weights are He-uniform, biases zero.
  /// spectral_norm_layers holds 0-based indices into the dense layers.
  Mlp(std::vector<int> layer_sizes, Head head, std::uint64_t seed,
      std::vector<int> spectral_norm_layers = {});

  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  ForwardCache forward_cached(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  /// Gradients of sum_{columns} <upstream, output> with respect to every
  /// parameter. upstream has the same shape as cache.output.
  Gradients backward(const ForwardCache& cache, const Eigen::Ref<const Eigen::MatrixXd>& upstream) const;

  /// Gradient of the same quantity with respect to the network input.
  Eigen::MatrixXd input_gradient(const ForwardCache& cache,
                                 const Eigen::Ref<const Eigen::MatrixXd>& upstream) const;

  Gradients zero_gradients() const;

  /// Deterministic order: layer 0 weight, layer 0 bias, layer 1 weight, ...
  std::vector<ParamBlock> parameter_blocks();
  std::vector<std::span<const double>> gradient_blocks(const Gradients& g) const;
  std::size_t parameter_count() const;

  /// One power-iteration refresh and rescale of every spectral-normalized layer.
  void apply_spectral_norm(int iterations = 1);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  const Head& head() const { return head_; }
  const std::vector<int>& spectral_norm_layers() const { return sn_layers_; }
  std::uint64_t seed() const { return seed_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  bool all_finite() const;

 private:
  void apply_head(Eigen::MatrixXd& z) const;

  std::vector<int> sizes_;
  std::vector<DenseLayer> layers_;
  Head head_;
  std::vector<int> sn_layers_;
  std::vector<Eigen::VectorXd> sn_vectors_;  // persistent left singular vector per SN layer
  std::uint64_t seed_ = 0;
};

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  AdamWConfig config;
  std::vector<Eigen::ArrayXd> first_moment;
  std::vector<Eigen::ArrayXd> second_moment;
  long long step_count = 0;

  explicit OptimizerState(AdamWConfig c = {}) : config(c) {}
};

/// Decoupled-weight-decay Adam over arbitrary parameter blocks. Moments are
/// allocated on the first call. Throws OptimizerError, naming the block, if
/// any gradient entry is non-finite; parameters are untouched in that case.
void adamw_step(std::span<const ParamBlock> params, std::span<const std::span<const double>> grads,
                OptimizerState& state);

void adamw_step(Mlp& net, const Gradients& grads, OptimizerState& state);

struct SpectralNormResult {
  double sigma = 0.0;  // largest singular value estimate before rescaling
  bool zero_matrix = false;
};

/// Power iteration on layer.weight, warm-started from u (updated in place),
/// followed by W <- W / sigma. A zero matrix is returned unchanged with the flag set.
SpectralNormResult spectral_normalize(DenseLayer& layer, Eigen::VectorXd& u, int iterations);

/// Estimate of the largest singular value without modifying the layer.
double spectral_norm_estimate(const Eigen::MatrixXd& w, Eigen::VectorXd u, int iterations);

// Checkpoints: a flat little-endian float64 array (parameter_blocks order,
// weights column-major) plus a JSON header next to it.
void save_checkpoint(const Mlp& net, const std::string& bin_path, const std::string& json_path);
Mlp load_checkpoint(const std::string& bin_path, const std::string& json_path);

}  // namespace nkcme::net
