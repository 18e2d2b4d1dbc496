#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "chexfuse/ops.hpp"
#include "chexfuse/rng.hpp"
#include "chexfuse/tensor.hpp"

// Stateful layer wrappers around the functional ops: they own parameters,
// accumulate gradients, and cache whatever the backward pass needs. forward()
// with train=false caches nothing and never mutates parameters (batch norm
// running stats are the one train-mode exception).

namespace chexfuse {

/// Conv kernels: zero-mean normal with std sqrt(2 / fan_in).
template <typename T>
TensorT<T> kaiming_normal(Rng& rng, std::vector<int> shape, int fan_in) {
  TensorT<T> t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(stddev * normal(rng));
  return t;
}

/// Linear weights and biases: uniform in +/- sqrt(1 / fan_in).
template <typename T>
TensorT<T> uniform_fan_in(Rng& rng, std::vector<int> shape, int fan_in) {
  TensorT<T> t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(bound * (2.0 * uniform_real(rng) - 1.0));
  return t;
}

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int in_channels, int out_channels,
              int kh, int kw, int stride, int padding, Rng& rng)
      : weight(name + ".weight",
               kaiming_normal<T>(rng, {out_channels, in_channels, kh, kw},
                                 in_channels * kh * kw)),
        stride_(stride),
        padding_(padding) {}

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    if (train) {
      x_cache_ = x;
      cached_ = true;
    }
    return conv2d(x, weight.value, stride_, padding_);
  }

  TensorT<T> backward(const TensorT<T>& gout) {
    if (!cached_) throw std::logic_error("Conv2dLayer: backward before train forward");
    auto grads = conv2d_backward(x_cache_, weight.value, stride_, padding_, gout);
    accumulate(weight.grad, grads.dweight);
    return std::move(grads.dx);
  }

  ParamT<T> weight;

 private:
  static void accumulate(TensorT<T>& into, const TensorT<T>& g) {
    for (std::size_t i = 0; i < into.numel(); ++i) into[i] += g[i];
  }

  int stride_ = 1;
  int padding_ = 0;
  TensorT<T> x_cache_;
  bool cached_ = false;
};

template <typename T>
class BatchNorm2dLayer {
 public:
  BatchNorm2dLayer() = default;
  BatchNorm2dLayer(const std::string& name, int channels, T momentum = T(0.1),
                   T epsilon = T(1e-5))
      : gamma(name + ".gamma", TensorT<T>::full({channels}, T(1))),
        beta(name + ".beta", TensorT<T>({channels})),
        running_mean(TensorT<T>({channels})),
        running_var(TensorT<T>::full({channels}, T(1))),
        stats_name_(name),
        momentum_(momentum),
        epsilon_(epsilon) {}

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    return batch_norm(x, gamma.value, beta.value, running_mean, running_var,
                      train, momentum_, epsilon_, train ? &cache_ : nullptr);
  }

  TensorT<T> backward(const TensorT<T>& gout) {
    auto grads = batch_norm_backward(cache_, gamma.value, gout);
    for (std::size_t i = 0; i < gamma.grad.numel(); ++i) {
      gamma.grad[i] += grads.dgamma[i];
      beta.grad[i] += grads.dbeta[i];
    }
    return std::move(grads.dx);
  }

  /// Running statistics, named for the checkpoint tensor directory.
  std::vector<std::pair<std::string, TensorT<T>*>> state_tensors() {
    return {{stats_name_ + ".running_mean", &running_mean},
            {stats_name_ + ".running_var", &running_var}};
  }

  ParamT<T> gamma;
  ParamT<T> beta;
  TensorT<T> running_mean;
  TensorT<T> running_var;

 private:
  std::string stats_name_;
  T momentum_ = T(0.1);
  T epsilon_ = T(1e-5);
  BatchNormCache<T> cache_;
};

template <typename T>
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(const std::string& name, int in_features, int out_features,
              Rng& rng)
      : weight(name + ".weight",
               uniform_fan_in<T>(rng, {out_features, in_features}, in_features)),
        bias(name + ".bias",
             uniform_fan_in<T>(rng, {out_features}, in_features)) {}

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    if (train) {
      x_cache_ = x;
      cached_ = true;
    }
    return linear(x, weight.value, bias.value);
  }

  TensorT<T> backward(const TensorT<T>& gout) {
    if (!cached_) throw std::logic_error("LinearLayer: backward before train forward");
    auto grads = linear_backward(x_cache_, weight.value, gout);
    for (std::size_t i = 0; i < weight.grad.numel(); ++i)
      weight.grad[i] += grads.dweight[i];
    for (std::size_t i = 0; i < bias.grad.numel(); ++i)
      bias.grad[i] += grads.dbias[i];
    return std::move(grads.dx);
  }

  ParamT<T> weight;
  ParamT<T> bias;

 private:
  TensorT<T> x_cache_;
  bool cached_ = false;
};

}  // namespace chexfuse
