#pragma once

// Feature providers fill the intra/inter-frame feature slots of the agent's
// state. A provider first extracts a raw descriptor vector for one frame
// (stored in replay) and then embeds a batch of raw vectors into features.
// Only the learned provider has trainable parameters.

#include <Eigen/Dense>
#include <memory>
#include <string>

#include "ratelab/env.hpp"
#include "ratelab/neural.hpp"

namespace ratelab {

struct FeatureContext {
  const FrameDescriptor& frame;
  const FrameDescriptor* previous = nullptr;  // null for frame 0
  const EnvState& state;
};

class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;

  virtual std::string name() const = 0;
  virtual int raw_dim() const = 0;
  virtual int feature_dim() const = 0;
  virtual Eigen::VectorXd raw(const FeatureContext& ctx) const = 0;

  // Columns of `raw` -> columns of features.
  virtual Eigen::MatrixXd embed(const Eigen::MatrixXd& raw, ForwardCache* cache = nullptr) const;

  virtual DenseNetwork* trainable() { return nullptr; }
  const DenseNetwork* trainable() const { return const_cast<FeatureProvider*>(this)->trainable(); }

  virtual std::unique_ptr<FeatureProvider> clone() const = 0;
};

// (c/c_max, k, scene flag, c/c_prev, d_prev/d_ref).
class DescriptorFeatures final : public FeatureProvider {
 public:
  DescriptorFeatures(double c_max, double d_ref) : c_max_(c_max), d_ref_(d_ref) {}

  std::string name() const override { return "descriptor"; }
  int raw_dim() const override { return 5; }
  int feature_dim() const override { return 5; }
  Eigen::VectorXd raw(const FeatureContext& ctx) const override;
  std::unique_ptr<FeatureProvider> clone() const override { return std::make_unique<DescriptorFeatures>(*this); }

 private:
  double c_max_;
  double d_ref_;
};

// Log-domain statistics: (log c, log c/c_prev, k/(k+1), intra flag,
// log1p(d_prev/d_ref)).
class HandcraftedFeatures final : public FeatureProvider {
 public:
  explicit HandcraftedFeatures(double d_ref) : d_ref_(d_ref) {}

  std::string name() const override { return "handcrafted"; }
  int raw_dim() const override { return 5; }
  int feature_dim() const override { return 5; }
  Eigen::VectorXd raw(const FeatureContext& ctx) const override;
  std::unique_ptr<FeatureProvider> clone() const override { return std::make_unique<HandcraftedFeatures>(*this); }

 private:
  double d_ref_;
};

// Dense embedding of the descriptor vector, trained end to end through the
// critic loss while unfrozen.
class LearnedFeatures final : public FeatureProvider {
 public:
  LearnedFeatures(double c_max, double d_ref, int hidden, int out_dim, Rng& rng);

  std::string name() const override { return "learned"; }
  int raw_dim() const override { return descriptor_.raw_dim(); }
  int feature_dim() const override { return net_.output_dim(); }
  Eigen::VectorXd raw(const FeatureContext& ctx) const override { return descriptor_.raw(ctx); }
  Eigen::MatrixXd embed(const Eigen::MatrixXd& raw, ForwardCache* cache = nullptr) const override;
  DenseNetwork* trainable() override { return &net_; }
  std::unique_ptr<FeatureProvider> clone() const override { return std::make_unique<LearnedFeatures>(*this); }

 private:
  DescriptorFeatures descriptor_;
  DenseNetwork net_;
};

// "descriptor", "handcrafted" or "learned".
std::unique_ptr<FeatureProvider> make_feature_provider(const std::string& name, double c_max, double d_ref, Rng& rng);

}  // namespace ratelab
