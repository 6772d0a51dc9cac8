#include "ratelab/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ratelab/error.hpp"

namespace ratelab {

DenseNetwork::DenseNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight.rows() != l.bias.size()) throw InvalidArgument("layer bias size does not match its weight rows");
    if (i > 0 && layers_[i - 1].weight.rows() != l.weight.cols()) {
      throw InvalidArgument("layer " + std::to_string(i) + " input size does not match previous output");
    }
  }
}

DenseNetwork DenseNetwork::make(std::span<const int> sizes, Activation hidden, Activation output, Rng& rng) {
  if (sizes.size() < 2) throw InvalidArgument("network needs an input and an output size");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int in = sizes[i];
    const int out = sizes[i + 1];
    if (in <= 0 || out <= 0) throw InvalidArgument("layer sizes must be positive");
    DenseLayer layer;
    layer.weight.resize(out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    // Column-major fill order keeps initialization reproducible.
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.activation = (i + 2 == sizes.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return DenseNetwork(std::move(layers));
}

int DenseNetwork::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }

int DenseNetwork::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

std::size_t DenseNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool DenseNetwork::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

bool DenseNetwork::operator==(const DenseNetwork& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.weight != b.weight || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

NetworkGrads NetworkGrads::zeros_like(const DenseNetwork& net) {
  NetworkGrads g;
  for (const auto& l : net.layers()) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

double NetworkGrads::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

bool NetworkGrads::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

void NetworkGrads::scale(double factor) {
  for (auto& l : layers) {
    l.weight *= factor;
    l.bias *= factor;
  }
}

NetworkGrads& NetworkGrads::operator+=(const NetworkGrads& other) {
  if (other.layers.size() != layers.size()) throw InvalidArgument("gradient shapes differ");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
  }
  return *this;
}

namespace {

void apply_activation(Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::kRelu) z = z.cwiseMax(0.0);
}

}  // namespace

Eigen::MatrixXd forward_batch(const DenseNetwork& net, const Eigen::MatrixXd& x, ForwardCache* cache) {
  if (x.rows() != net.input_dim()) {
    throw InvalidArgument("network expects input of size " + std::to_string(net.input_dim()) + ", got " +
                          std::to_string(x.rows()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->activations.clear();
  }
  Eigen::MatrixXd h = x;
  for (const auto& layer : net.layers()) {
    Eigen::MatrixXd z = layer.weight * h;
    z.colwise() += layer.bias;
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->activations.push_back(z);
    }
    apply_activation(z, layer.activation);
    h = std::move(z);
  }
  return h;
}

Eigen::VectorXd forward(const DenseNetwork& net, const Eigen::VectorXd& x) {
  return forward_batch(net, x);
}

BackwardResult backward(const DenseNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                        bool want_params) {
  const auto& layers = net.layers();
  if (cache.inputs.size() != layers.size()) throw InvalidArgument("forward cache does not belong to this network");
  if (upstream.rows() != net.output_dim() || upstream.cols() != cache.inputs.front().cols()) {
    throw InvalidArgument("upstream gradient shape does not match network output");
  }
  BackwardResult result;
  if (want_params) result.params.layers.resize(layers.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& layer = layers[i];
    if (layer.activation == Activation::kRelu) {
      delta = delta.cwiseProduct((cache.activations[i].array() > 0.0).cast<double>().matrix());
    }
    if (want_params) {
      result.params.layers[i].weight = delta * cache.inputs[i].transpose();
      result.params.layers[i].bias = delta.rowwise().sum();
    }
    delta = layer.weight.transpose() * delta;
  }
  result.input = std::move(delta);
  return result;
}

BackwardResult gradients(const DenseNetwork& net, const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) {
  ForwardCache cache;
  forward_batch(net, x, &cache);
  return backward(net, cache, upstream);
}

OptimizerState OptimizerState::for_network(const DenseNetwork& net) {
  OptimizerState s;
  const auto zeros = NetworkGrads::zeros_like(net);
  s.first = zeros.layers;
  s.second = zeros.layers;
  return s;
}

bool OptimizerState::operator==(const OptimizerState& other) const {
  if (step != other.step || beta1 != other.beta1 || beta2 != other.beta2 || epsilon != other.epsilon) return false;
  if (first.size() != other.first.size() || second.size() != other.second.size()) return false;
  auto same = [](const LayerGrad& a, const LayerGrad& b) {
    return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() && a.weight == b.weight &&
           a.bias == b.bias;
  };
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (!same(first[i], other.first[i]) || !same(second[i], other.second[i])) return false;
  }
  return true;
}

void adam_step(DenseNetwork& net, const NetworkGrads& grads, OptimizerState& opt, double lr) {
  auto& layers = net.mutable_layers();
  if (grads.layers.size() != layers.size() || opt.first.size() != layers.size()) {
    throw InvalidArgument("gradient/optimizer shapes do not match the network");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (grads.layers[i].weight.rows() != layers[i].weight.rows() ||
        grads.layers[i].weight.cols() != layers[i].weight.cols() ||
        grads.layers[i].bias.size() != layers[i].bias.size()) {
      throw InvalidArgument("gradient shape mismatch in layer " + std::to_string(i));
    }
  }
  if (!grads.all_finite()) throw NonFiniteError("non-finite gradient; optimizer step skipped");

  ++opt.step;
  const double b1 = opt.beta1;
  const double b2 = opt.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.epsilon);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, opt.first[i].weight, opt.second[i].weight, grads.layers[i].weight);
    update(layers[i].bias, opt.first[i].bias, opt.second[i].bias, grads.layers[i].bias);
  }
}

double LrSchedule::at(double epoch) const {
  epoch = std::clamp(epoch, 0.0, total_epochs);
  if (warmup_epochs > 0.0 && epoch < warmup_epochs) {
    const double floor = std::max(lr_start / 10.0, std::min(lr_start, lr_end));
    return floor + (lr_start - floor) * (epoch / warmup_epochs);
  }
  const double span = total_epochs - warmup_epochs;
  if (span <= 0.0) return lr_end;
  const double progress = (epoch - warmup_epochs) / span;
  if (progress <= 0.0) return lr_start;
  if (progress >= 1.0) return lr_end;
  return lr_end + (lr_start - lr_end) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double lr_at(const LrSchedule& schedule, double epoch) { return schedule.at(epoch); }

double clip_by_global_norm(std::span<NetworkGrads* const> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw InvalidArgument("max_norm must be positive");
  double sq = 0.0;
  for (const auto* g : grads) sq += g->squared_norm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto* g : grads) g->scale(factor);
  }
  return norm;
}

double clip_by_global_norm(NetworkGrads& grads, double max_norm) {
  NetworkGrads* one[] = {&grads};
  return clip_by_global_norm(std::span<NetworkGrads* const>(one), max_norm);
}

void blend_parameters(const DenseNetwork& online, DenseNetwork& target, double retention) {
  const auto& src = online.layers();
  auto& dst = target.mutable_layers();
  if (src.size() != dst.size()) throw InvalidArgument("soft update between networks of different depth");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].weight.rows() != dst[i].weight.rows() || src[i].weight.cols() != dst[i].weight.cols()) {
      throw InvalidArgument("soft update between networks of different shape");
    }
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].weight = (1.0 - retention) * src[i].weight + retention * dst[i].weight;
    dst[i].bias = (1.0 - retention) * src[i].bias + retention * dst[i].bias;
  }
}

}  // namespace ratelab
