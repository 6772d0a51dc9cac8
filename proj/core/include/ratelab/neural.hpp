#pragma once

// Dense feed-forward networks with exact reverse-mode gradients, Adam, learning
// rate schedules and global-norm gradient clipping.
//
// Batches are stored column-wise: an (features x batch) matrix holds one
// sample per column.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "ratelab/rng.hpp"

namespace ratelab {

enum class Activation : unsigned char { kRelu = 0, kIdentity = 1 };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kIdentity;
};

class DenseNetwork {
 public:
  DenseNetwork() = default;
  explicit DenseNetwork(std::vector<DenseLayer> layers);

  // sizes = {in, h1, ..., out}. Hidden layers use `hidden`, the last layer
  // `output`. Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  static DenseNetwork make(std::span<const int> sizes, Activation hidden, Activation output, Rng& rng);

  int input_dim() const;
  int output_dim() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  bool operator==(const DenseNetwork& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

struct LayerGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct NetworkGrads {
  std::vector<LayerGrad> layers;

  static NetworkGrads zeros_like(const DenseNetwork& net);
  double squared_norm() const;
  bool all_finite() const;
  void scale(double factor);
  NetworkGrads& operator+=(const NetworkGrads& other);
};

// Intermediate values kept by a batched forward pass for the backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;       // input of each layer
  std::vector<Eigen::MatrixXd> activations;  // pre-activation of each layer
};

Eigen::VectorXd forward(const DenseNetwork& net, const Eigen::VectorXd& x);
Eigen::MatrixXd forward_batch(const DenseNetwork& net, const Eigen::MatrixXd& x, ForwardCache* cache = nullptr);

struct BackwardResult {
  NetworkGrads params;       // summed over the batch
  Eigen::MatrixXd input;     // d/dx per column
};

// Gradients of sum_j upstream(:, j) . forward(net, x(:, j)). The rectifier's
// subgradient at exactly 0 is 0.
BackwardResult backward(const DenseNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                        bool want_params = true);

// Single-sample convenience wrapper.
BackwardResult gradients(const DenseNetwork& net, const Eigen::VectorXd& x, const Eigen::VectorXd& upstream);

struct OptimizerState {
  std::vector<LayerGrad> first;
  std::vector<LayerGrad> second;
  long long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerState for_network(const DenseNetwork& net);
  bool operator==(const OptimizerState& other) const;
};

// Bias-corrected Adam. Throws NonFiniteError (leaving everything untouched)
// if any gradient is NaN/Inf.
void adam_step(DenseNetwork& net, const NetworkGrads& grads, OptimizerState& opt, double lr);

// Linear warm-up followed by cosine annealing.
struct LrSchedule {
  double lr_start = 5e-4;
  double lr_end = 5e-5;
  double total_epochs = 300;
  double warmup_epochs = 0;

  double at(double epoch) const;
};

double lr_at(const LrSchedule& schedule, double epoch);

// Rescales grads so that their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_by_global_norm(NetworkGrads& grads, double max_norm);
double clip_by_global_norm(std::span<NetworkGrads* const> grads, double max_norm);

// target <- (1 - retention) * online + retention * target
void blend_parameters(const DenseNetwork& online, DenseNetwork& target, double retention);

}  // namespace ratelab
