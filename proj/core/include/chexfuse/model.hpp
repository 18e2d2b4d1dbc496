#pragma once

#include <string>
#include <utility>
#include <vector>

#include "chexfuse/backbone.hpp"
#include "chexfuse/fusion_head.hpp"

namespace chexfuse {

/// Backbone + fusion head as one trainable unit. With image_only=true the
/// metadata path is bypassed and the head reduces to the baseline classifier
/// over pooled features (the image-only ablation).
template <typename T>
class FusedClassifier {
 public:
  FusedClassifier(const BackboneConfig& backbone_config, HeadConfig head_config,
                  std::uint64_t seed, HeadInit init = HeadInit::kIdentityStart,
                  bool image_only = false)
      : rng_(make_rng(seed)),
        backbone_(backbone_config, rng_),
        head_(fill_feature_dim(head_config, backbone_.feature_dim()), rng_,
              init),
        image_only_(image_only) {}

  struct Output {
    TensorT<T> logits;
    TensorT<T> probs;
  };

  Output forward(const TensorT<T>& images, const TensorT<T>& meta,
                 bool train) {
    auto p = backbone_.extract_features(images, train);
    if (image_only_) {
      auto probs = head_.baseline_forward(p, train);
      return {TensorT<T>(), std::move(probs)};
    }
    auto out = head_.fuse_forward(p, meta, train);
    return {std::move(out.logits), std::move(out.probs)};
  }

  /// Image-only reference output regardless of mode (shares W3/b3).
  TensorT<T> baseline_probs(const TensorT<T>& images) {
    auto p = backbone_.extract_features(images, false);
    return head_.baseline_forward(p, false);
  }

  /// Full backward pass from d(loss)/d(probs); fills every parameter grad.
  void backward(const TensorT<T>& dprobs) {
    auto dlogits = head_.probs_to_logits_grad(dprobs);
    TensorT<T> dp = image_only_ ? head_.baseline_backward(dlogits)
                                : head_.backward(dlogits).dp;
    backbone_.backward(dp);
  }

  std::vector<ParamT<T>*> parameters() {
    auto params = backbone_.parameters();
    for (auto* p : head_.parameters()) params.push_back(p);
    return params;
  }

  std::vector<std::pair<std::string, TensorT<T>*>> state_tensors() {
    return backbone_.state_tensors();
  }

  void zero_grads() {
    for (auto* p : parameters()) p->zero_grad();
  }

  Backbone<T>& backbone() { return backbone_; }
  FusionHead<T>& head() { return head_; }
  bool image_only() const { return image_only_; }

 private:
  static HeadConfig fill_feature_dim(HeadConfig cfg, int feature_dim) {
    if (cfg.feature_dim == 0) cfg.feature_dim = feature_dim;
    if (cfg.feature_dim != feature_dim) {
      throw ConfigError("head feature_dim " + std::to_string(cfg.feature_dim) +
                        " does not match backbone output " +
                        std::to_string(feature_dim));
    }
    return cfg;
  }

  Rng rng_;
  Backbone<T> backbone_;
  FusionHead<T> head_;
  bool image_only_;
};

}  // namespace chexfuse
