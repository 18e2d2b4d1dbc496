#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "chexfuse/layers.hpp"

// Densely connected convolutional backbone. Two wirings share every
// structural mechanism: "densenet121" is the full DenseNet-BC-121 layout,
// "tiny" is a seconds-scale variant for gradient and overfit tests.

namespace chexfuse {

struct BackboneConfig {
  std::vector<int> block_layers;
  int growth_rate = 0;
  int init_channels = 0;
  double compression = 0.5;
  std::string variant_name;
  int input_size = 0;  // expected square input edge

  static BackboneConfig densenet121() {
    return {{6, 12, 24, 16}, 32, 64, 0.5, "densenet121", 224};
  }

  static BackboneConfig tiny() { return {{2, 2}, 8, 16, 0.5, "tiny", 32}; }

  static BackboneConfig from_variant(const std::string& name) {
    if (name == "densenet121") return densenet121();
    if (name == "tiny") return tiny();
    throw ConfigError("unknown backbone variant '" + name + "'");
  }

  void validate() const {
    if (block_layers.empty()) throw ConfigError("backbone: no dense blocks");
    for (const int l : block_layers) {
      if (l < 1) throw ConfigError("backbone: block layer counts must be >= 1");
    }
    if (growth_rate < 1) throw ConfigError("backbone: growth_rate must be >= 1");
    if (init_channels < 1) throw ConfigError("backbone: init_channels must be >= 1");
    if (!(compression > 0.0 && compression <= 1.0)) {
      throw ConfigError("backbone: compression must be in (0,1]");
    }
    if (input_size < 1) throw ConfigError("backbone: input_size must be >= 1");
  }
};

/// BN -> ReLU -> 1x1 conv (4k bottleneck) -> BN -> ReLU -> 3x3 conv (k, pad 1).
/// Produces exactly growth_rate new channels at unchanged spatial size.
template <typename T>
class DenseLayer {
 public:
  DenseLayer(const std::string& prefix, int in_channels, int growth_rate,
             Rng& rng)
      : bn1_(prefix + ".bn1", in_channels),
        conv1_(prefix + ".conv1", in_channels, 4 * growth_rate, 1, 1, 1, 0, rng),
        bn2_(prefix + ".bn2", 4 * growth_rate),
        conv2_(prefix + ".conv2", 4 * growth_rate, growth_rate, 3, 3, 1, 1, rng) {}

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    auto a = bn1_.forward(x, train);
    if (train) relu1_in_ = a;
    auto b = conv1_.forward(relu(a), train);
    auto c = bn2_.forward(b, train);
    if (train) relu2_in_ = c;
    return conv2_.forward(relu(c), train);
  }

  TensorT<T> backward(const TensorT<T>& gout) {
    auto d = conv2_.backward(gout);
    d = bn2_.backward(relu_backward(relu2_in_, d));
    d = conv1_.backward(d);
    return bn1_.backward(relu_backward(relu1_in_, d));
  }

  void collect(std::vector<ParamT<T>*>& params,
               std::vector<std::pair<std::string, TensorT<T>*>>& state) {
    params.push_back(&bn1_.gamma);
    params.push_back(&bn1_.beta);
    params.push_back(&conv1_.weight);
    params.push_back(&bn2_.gamma);
    params.push_back(&bn2_.beta);
    params.push_back(&conv2_.weight);
    for (auto& s : bn1_.state_tensors()) state.push_back(s);
    for (auto& s : bn2_.state_tensors()) state.push_back(s);
  }

 private:
  BatchNorm2dLayer<T> bn1_;
  Conv2dLayer<T> conv1_;
  BatchNorm2dLayer<T> bn2_;
  Conv2dLayer<T> conv2_;
  TensorT<T> relu1_in_, relu2_in_;
};

/// Each layer sees the concatenation of the block input and every previous
/// layer's output; the block emits in_channels + L*k channels.
template <typename T>
class DenseBlock {
 public:
  DenseBlock(const std::string& prefix, int in_channels, int num_layers,
             int growth_rate, Rng& rng)
      : in_channels_(in_channels), growth_rate_(growth_rate) {
    layers_.reserve(static_cast<std::size_t>(num_layers));
    for (int i = 0; i < num_layers; ++i) {
      layers_.emplace_back(prefix + ".layer" + std::to_string(i),
                           in_channels + i * growth_rate, growth_rate, rng);
    }
  }

  int out_channels() const {
    return in_channels_ + static_cast<int>(layers_.size()) * growth_rate_;
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    TensorT<T> features({n, out_channels(), h, w});
    copy_channels(x, features, 0);
    int filled = in_channels_;
    for (auto& layer : layers_) {
      TensorT<T> stage = slice_channels(features, 0, filled);
      TensorT<T> fresh = layer.forward(stage, train);
      copy_channels(fresh, features, filled);
      filled += growth_rate_;
    }
    return features;
  }

  TensorT<T> backward(const TensorT<T>& gout) {
    TensorT<T> grad = gout;
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
      const int in_ch = in_channels_ + i * growth_rate_;
      TensorT<T> d_input = slice_channels(grad, 0, in_ch);
      TensorT<T> d_fresh = slice_channels(grad, in_ch, growth_rate_);
      TensorT<T> d_through = layers_[static_cast<std::size_t>(i)].backward(d_fresh);
      for (std::size_t j = 0; j < d_input.numel(); ++j)
        d_input[j] += d_through[j];
      grad = std::move(d_input);
    }
    return grad;
  }

  void collect(std::vector<ParamT<T>*>& params,
               std::vector<std::pair<std::string, TensorT<T>*>>& state) {
    for (auto& layer : layers_) layer.collect(params, state);
  }

 private:
  static void copy_channels(const TensorT<T>& src, TensorT<T>& dst,
                            int channel_offset) {
    const int n = src.dim(0), c = src.dim(1);
    const std::size_t plane =
        static_cast<std::size_t>(src.dim(2)) * src.dim(3);
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < c; ++ci) {
        const T* from = src.data() + src.offset4(ni, ci, 0, 0);
        T* to = dst.data() + dst.offset4(ni, channel_offset + ci, 0, 0);
        std::copy(from, from + plane, to);
      }
    }
  }

  static TensorT<T> slice_channels(const TensorT<T>& src, int first,
                                   int count) {
    const int n = src.dim(0), h = src.dim(2), w = src.dim(3);
    TensorT<T> out({n, count, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < count; ++ci) {
        const T* from = src.data() + src.offset4(ni, first + ci, 0, 0);
        std::copy(from, from + plane,
                  out.data() + out.offset4(ni, ci, 0, 0));
      }
    }
    return out;
  }

  int in_channels_;
  int growth_rate_;
  std::vector<DenseLayer<T>> layers_;
};

/// BN -> ReLU -> 1x1 conv (channel compression) -> 2x2 avg pool stride 2.
template <typename T>
class TransitionLayer {
 public:
  TransitionLayer(const std::string& prefix, int in_channels,
                  double compression, Rng& rng)
      : bn_(prefix + ".bn", in_channels),
        conv_(prefix + ".conv", in_channels,
              static_cast<int>(std::floor(in_channels * compression)), 1, 1, 1,
              0, rng),
        out_channels_(static_cast<int>(std::floor(in_channels * compression))) {}

  int out_channels() const { return out_channels_; }

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
      throw ShapeError("transition: spatial dims must be even, got " +
                       x.shape_string());
    }
    auto a = bn_.forward(x, train);
    if (train) relu_in_ = a;
    auto b = conv_.forward(relu(a), train);
    return pool(b, PoolKind::kAvg, 2, 2, 2, 0, train ? &pool_cache_ : nullptr);
  }

  TensorT<T> backward(const TensorT<T>& gout) {
    auto d = pool_backward(pool_cache_, gout);
    d = conv_.backward(d);
    return bn_.backward(relu_backward(relu_in_, d));
  }

  void collect(std::vector<ParamT<T>*>& params,
               std::vector<std::pair<std::string, TensorT<T>*>>& state) {
    params.push_back(&bn_.gamma);
    params.push_back(&bn_.beta);
    params.push_back(&conv_.weight);
    for (auto& s : bn_.state_tensors()) state.push_back(s);
  }

 private:
  BatchNorm2dLayer<T> bn_;
  Conv2dLayer<T> conv_;
  int out_channels_;
  TensorT<T> relu_in_;
  PoolCache<T> pool_cache_;
};

template <typename T>
class Backbone {
 public:
  Backbone(const BackboneConfig& config, Rng& rng) : cfg_(config) {
    cfg_.validate();
    const bool full = cfg_.variant_name != "tiny";
    // densenet121 stem: 7x7 conv stride 2 pad 3 -> BN -> ReLU -> 3x3 max
    // pool stride 2 pad 1. tiny stem: 3x3 conv stride 1 pad 1 -> BN -> ReLU.
    if (full) {
      stem_conv_ = Conv2dLayer<T>("backbone.stem.conv", 3, cfg_.init_channels,
                                  7, 7, 2, 3, rng);
      stem_pool_ = true;
    } else {
      stem_conv_ = Conv2dLayer<T>("backbone.stem.conv", 3, cfg_.init_channels,
                                  3, 3, 1, 1, rng);
      stem_pool_ = false;
    }
    stem_bn_ = BatchNorm2dLayer<T>("backbone.stem.bn", cfg_.init_channels);

    int channels = cfg_.init_channels;
    const int num_blocks = static_cast<int>(cfg_.block_layers.size());
    for (int b = 0; b < num_blocks; ++b) {
      blocks_.emplace_back("backbone.block" + std::to_string(b + 1), channels,
                           cfg_.block_layers[static_cast<std::size_t>(b)],
                           cfg_.growth_rate, rng);
      channels = blocks_.back().out_channels();
      if (b + 1 < num_blocks) {
        transitions_.emplace_back("backbone.trans" + std::to_string(b + 1),
                                  channels, cfg_.compression, rng);
        channels = transitions_.back().out_channels();
      }
    }
    final_bn_ = BatchNorm2dLayer<T>("backbone.final_bn", channels);
    feature_dim_ = channels;
  }

  int feature_dim() const { return feature_dim_; }
  const BackboneConfig& config() const { return cfg_; }

  /// Pooled feature vector p: [N, feature_dim]. Eval mode reads BN running
  /// stats and leaves all state untouched.
  TensorT<T> extract_features(const TensorT<T>& images, bool train) {
    detail::require_rank(images, 4, "extract_features input");
    if (images.dim(1) != 3 || images.dim(2) != cfg_.input_size ||
        images.dim(3) != cfg_.input_size) {
      throw ShapeError("extract_features: variant '" + cfg_.variant_name +
                       "' expects [N,3," + std::to_string(cfg_.input_size) +
                       "," + std::to_string(cfg_.input_size) + "], got " +
                       images.shape_string());
    }
    auto x = stem_conv_.forward(images, train);
    x = stem_bn_.forward(x, train);
    if (train) stem_relu_in_ = x;
    x = relu(x);
    if (stem_pool_) {
      x = pool(x, PoolKind::kMax, 3, 3, 2, 1,
               train ? &stem_pool_cache_ : nullptr);
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      x = blocks_[b].forward(x, train);
      if (b < transitions_.size()) x = transitions_[b].forward(x, train);
    }
    x = final_bn_.forward(x, train);
    if (train) final_relu_in_ = x;
    x = relu(x);
    gap_in_shape_ = x.shape();
    return global_avg_pool(x);
  }

  /// Gradient w.r.t. the input images given d(loss)/dp.
  TensorT<T> backward(const TensorT<T>& dp) {
    auto d = global_avg_pool_backward<T>(gap_in_shape_, dp);
    d = final_bn_.backward(relu_backward(final_relu_in_, d));
    for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
      if (static_cast<std::size_t>(b) < transitions_.size()) {
        d = transitions_[static_cast<std::size_t>(b)].backward(d);
      }
      d = blocks_[static_cast<std::size_t>(b)].backward(d);
    }
    if (stem_pool_) d = pool_backward(stem_pool_cache_, d);
    d = stem_bn_.backward(relu_backward(stem_relu_in_, d));
    return stem_conv_.backward(d);
  }

  std::vector<ParamT<T>*> parameters() {
    std::vector<ParamT<T>*> params;
    std::vector<std::pair<std::string, TensorT<T>*>> state;
    collect(params, state);
    return params;
  }

  std::vector<std::pair<std::string, TensorT<T>*>> state_tensors() {
    std::vector<ParamT<T>*> params;
    std::vector<std::pair<std::string, TensorT<T>*>> state;
    collect(params, state);
    return state;
  }

 private:
  void collect(std::vector<ParamT<T>*>& params,
               std::vector<std::pair<std::string, TensorT<T>*>>& state) {
    params.push_back(&stem_conv_.weight);
    params.push_back(&stem_bn_.gamma);
    params.push_back(&stem_bn_.beta);
    for (auto& s : stem_bn_.state_tensors()) state.push_back(s);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      blocks_[b].collect(params, state);
      if (b < transitions_.size()) transitions_[b].collect(params, state);
    }
    params.push_back(&final_bn_.gamma);
    params.push_back(&final_bn_.beta);
    for (auto& s : final_bn_.state_tensors()) state.push_back(s);
  }

  BackboneConfig cfg_;
  Conv2dLayer<T> stem_conv_;
  BatchNorm2dLayer<T> stem_bn_;
  bool stem_pool_ = false;
  TensorT<T> stem_relu_in_;
  PoolCache<T> stem_pool_cache_;
  std::vector<DenseBlock<T>> blocks_;
  std::vector<TransitionLayer<T>> transitions_;
  BatchNorm2dLayer<T> final_bn_;
  TensorT<T> final_relu_in_;
  std::vector<int> gap_in_shape_;
  int feature_dim_ = 0;
};

}  // namespace chexfuse
