#include "ratelab/features.hpp"

#include <array>
#include <cmath>

#include "ratelab/error.hpp"

namespace ratelab {

Eigen::MatrixXd FeatureProvider::embed(const Eigen::MatrixXd& raw, ForwardCache* /*cache*/) const { return raw; }

Eigen::VectorXd DescriptorFeatures::raw(const FeatureContext& ctx) const {
  Eigen::VectorXd v(5);
  const double prev_c = ctx.previous ? ctx.previous->c : ctx.frame.c;
  v << ctx.frame.c / c_max_, ctx.frame.k, ctx.frame.scene_change ? 1.0 : 0.0, ctx.frame.c / prev_c,
      ctx.state.d_prev / d_ref_;
  return v;
}

Eigen::VectorXd HandcraftedFeatures::raw(const FeatureContext& ctx) const {
  Eigen::VectorXd v(5);
  const double prev_c = ctx.previous ? ctx.previous->c : ctx.frame.c;
  v << std::log(ctx.frame.c), std::log(ctx.frame.c / prev_c), ctx.frame.k / (ctx.frame.k + 1.0),
      ctx.frame.intra ? 1.0 : 0.0, std::log1p(ctx.state.d_prev / d_ref_);
  return v;
}

LearnedFeatures::LearnedFeatures(double c_max, double d_ref, int hidden, int out_dim, Rng& rng)
    : descriptor_(c_max, d_ref) {
  const std::array<int, 3> sizes{descriptor_.raw_dim(), hidden, out_dim};
  net_ = DenseNetwork::make(sizes, Activation::kRelu, Activation::kIdentity, rng);
}

Eigen::MatrixXd LearnedFeatures::embed(const Eigen::MatrixXd& raw, ForwardCache* cache) const {
  return forward_batch(net_, raw, cache);
}

std::unique_ptr<FeatureProvider> make_feature_provider(const std::string& name, double c_max, double d_ref, Rng& rng) {
  if (name == "descriptor") return std::make_unique<DescriptorFeatures>(c_max, d_ref);
  if (name == "handcrafted") return std::make_unique<HandcraftedFeatures>(d_ref);
  if (name == "learned") return std::make_unique<LearnedFeatures>(c_max, d_ref, 32, 5, rng);
  throw InvalidArgument("unknown feature provider '" + name + "' (expected descriptor, handcrafted or learned)");
}

}  // namespace ratelab
