#pragma once

#include <string>
#include <utility>
#include <vector>

#include "chexfuse/layers.hpp"

// Fusion head: pooled image features p and the metadata vector m pass through
// two ReLU fully connected layers; p is then added back onto the second
// layer's output before the 14-way sigmoid classifier. With W2 = 0, b2 = 0
// the added branch vanishes and the head collapses exactly onto the plain
// classifier over p, so a fused model can never start worse than that
// baseline.

namespace chexfuse {

inline constexpr int kNumClasses = 14;

enum class HeadInit { kStandard, kIdentityStart };

struct HeadConfig {
  int meta_dim = 6;
  int hidden1 = 512;
  int feature_dim = 0;
  int num_classes = kNumClasses;

  void validate() const {
    if (meta_dim < 0) throw ConfigError("head: meta_dim must be >= 0");
    if (hidden1 < 1) throw ConfigError("head: hidden1 must be >= 1");
    if (feature_dim < 1) throw ConfigError("head: feature_dim must be >= 1");
    if (num_classes != kNumClasses) {
      throw ConfigError("head: num_classes is fixed at " +
                        std::to_string(kNumClasses));
    }
  }
};

template <typename T>
class FusionHead {
 public:
  FusionHead(const HeadConfig& config, Rng& rng,
             HeadInit mode = HeadInit::kIdentityStart)
      : cfg_(config) {
    cfg_.validate();
    fc1_ = LinearLayer<T>("head.fc1", cfg_.feature_dim + cfg_.meta_dim,
                          cfg_.hidden1, rng);
    fc2_ = LinearLayer<T>("head.fc2", cfg_.hidden1, cfg_.feature_dim, rng);
    classifier_ = LinearLayer<T>("head.classifier", cfg_.feature_dim,
                                 cfg_.num_classes, rng);
    if (mode == HeadInit::kIdentityStart) {
      // Start exactly at the baseline classifier: the fused path contributes
      // relu(0) = 0 until training moves W2/b2.
      fc2_.weight.value.fill(T(0));
      fc2_.bias.value.fill(T(0));
    }
  }

  struct Output {
    TensorT<T> logits;
    TensorT<T> probs;
  };

  /// z = [p, m]; h1 = relu(W1 z + b1); h2 = relu(W2 h1 + b2);
  /// f = h2 + p; logits = W3 f + b3; probs = sigmoid(logits).
  Output fuse_forward(const TensorT<T>& p, const TensorT<T>& m, bool train) {
    check_inputs(p, &m);
    auto z = concat_features(p, m);
    auto h1_pre = fc1_.forward(z, train);
    if (train) relu1_in_ = h1_pre;
    auto h1 = relu(h1_pre);
    auto h2_pre = fc2_.forward(h1, train);
    if (train) relu2_in_ = h2_pre;
    auto h2 = relu(h2_pre);
    auto f = elementwise_add(h2, p);
    auto logits = classifier_.forward(f, train);
    auto probs = sigmoid(logits);
    if (train) probs_cache_ = probs;
    return {std::move(logits), std::move(probs)};
  }

  /// The baseline CheXNet-style head: sigmoid(W3 p + b3). Shares W3/b3 with
  /// the fused path (and the same accumulation order, so the identity map is
  /// bit-exact).
  TensorT<T> baseline_forward(const TensorT<T>& p, bool train = false) {
    check_inputs(p, nullptr);
    auto logits = classifier_.forward(p, train);
    auto probs = sigmoid(logits);
    if (train) probs_cache_ = probs;
    return probs;
  }

  struct InputGrads {
    TensorT<T> dp;
    TensorT<T> dm;
  };

  /// Backward from d(loss)/d(logits) through the fused path; accumulates all
  /// six parameter gradients and returns gradients for p and m.
  InputGrads backward(const TensorT<T>& dlogits) {
    auto df = classifier_.backward(dlogits);
    // f = h2 + p: the skip hands df to p unchanged.
    auto dh2 = relu_backward(relu2_in_, df);
    auto dh1 = relu_backward(relu1_in_, fc2_.backward(dh2));
    auto dz = fc1_.backward(dh1);
    auto split = concat_features_backward(cfg_.feature_dim, cfg_.meta_dim, dz);
    for (std::size_t i = 0; i < df.numel(); ++i) split.da[i] += df[i];
    return {std::move(split.da), std::move(split.db)};
  }

  /// Backward for the image-only path (baseline_forward with train=true).
  TensorT<T> baseline_backward(const TensorT<T>& dlogits) {
    return classifier_.backward(dlogits);
  }

  /// d(loss)/d(logits) from d(loss)/d(probs) using the cached forward probs.
  TensorT<T> probs_to_logits_grad(const TensorT<T>& dprobs) const {
    return sigmoid_backward(probs_cache_, dprobs);
  }

  std::vector<ParamT<T>*> parameters() {
    return {&fc1_.weight,        &fc1_.bias, &fc2_.weight,
            &fc2_.bias,          &classifier_.weight, &classifier_.bias};
  }

  const HeadConfig& config() const { return cfg_; }

  LinearLayer<T>& fc1() { return fc1_; }
  LinearLayer<T>& fc2() { return fc2_; }
  LinearLayer<T>& classifier() { return classifier_; }

 private:
  void check_inputs(const TensorT<T>& p, const TensorT<T>* m) const {
    detail::require_rank(p, 2, "fusion head p");
    if (p.dim(1) != cfg_.feature_dim) {
      throw ShapeError("fusion head: p width " + std::to_string(p.dim(1)) +
                       " != feature_dim " + std::to_string(cfg_.feature_dim));
    }
    if (m) {
      detail::require_rank(*m, 2, "fusion head m");
      if (m->dim(0) != p.dim(0)) {
        throw ShapeError("fusion head: batch mismatch between p and m");
      }
      if (m->dim(1) != cfg_.meta_dim) {
        throw ShapeError("fusion head: m width " + std::to_string(m->dim(1)) +
                         " != meta_dim " + std::to_string(cfg_.meta_dim));
      }
    }
  }

  HeadConfig cfg_;
  LinearLayer<T> fc1_, fc2_, classifier_;
  TensorT<T> relu1_in_, relu2_in_, probs_cache_;
};

}  // namespace chexfuse
