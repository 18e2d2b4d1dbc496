#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "chexfuse/rng.hpp"
#include "chexfuse/tensor.hpp"

namespace chexfuse {

struct GradCheckReport {
  std::string op_name;
  double max_rel_error = 0.0;
  int tested_points = 0;
};

/// One tensor whose analytic gradient is being verified. `value` is mutated
/// in place (+/- h) while the objective is re-evaluated, then restored.
struct GradCheckTarget {
  TensorD* value = nullptr;
  const TensorD* analytic = nullptr;
  // Probe at least this many coordinates of this tensor (0 = no floor).
  int min_coords = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  int min_coords = 50;  // across all targets
  std::uint64_t seed = 0;
};

/// Central finite differences in double precision against the supplied
/// analytic gradients. `objective` must be a pure function of the target
/// tensors' current values. Relative error per coordinate is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline GradCheckReport gradient_check(const std::string& op_name,
                                      const std::function<double()>& objective,
                                      std::vector<GradCheckTarget> targets,
                                      const GradCheckOptions& opts = {}) {
  std::size_t total = 0;
  for (const auto& t : targets) total += t.value->numel();

  // Pick coordinates: honor per-target floors, then fill uniformly at random
  // across all coordinates until the global floor is met.
  std::vector<std::pair<std::size_t, std::size_t>> coords;  // (target, index)
  Rng rng = make_rng(opts.seed, 0x67726164ULL);
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const std::size_t n = targets[ti].value->numel();
    const std::size_t want =
        std::min<std::size_t>(n, static_cast<std::size_t>(
                                     std::max(0, targets[ti].min_coords)));
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    shuffle(all, rng);
    for (std::size_t i = 0; i < want; ++i) coords.emplace_back(ti, all[i]);
  }
  const std::size_t global_want =
      std::min<std::size_t>(total, static_cast<std::size_t>(opts.min_coords));
  std::size_t guard = 0;
  while (coords.size() < global_want && guard++ < 100000) {
    // Uniform over the concatenated coordinate space.
    std::size_t flat = uniform_int(rng, total);
    std::size_t ti = 0;
    while (flat >= targets[ti].value->numel()) {
      flat -= targets[ti].value->numel();
      ++ti;
    }
    const auto c = std::make_pair(ti, flat);
    if (std::find(coords.begin(), coords.end(), c) == coords.end())
      coords.push_back(c);
  }

  GradCheckReport report{op_name, 0.0, static_cast<int>(coords.size())};
  const double h = opts.step;
  for (const auto& [ti, idx] : coords) {
    TensorD& value = *targets[ti].value;
    const double saved = value[idx];
    value[idx] = saved + h;
    const double f_plus = objective();
    value[idx] = saved - h;
    const double f_minus = objective();
    value[idx] = saved;

    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double analytic = (*targets[ti].analytic)[idx];
    const double rel = std::abs(analytic - numeric) /
                       std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  return report;
}

/// Draws a random tensor, redrawing until `acceptable` holds (used to keep
/// test points away from ReLU / max-pool kinks). Throws after 10 attempts.
inline TensorD random_tensor_where(
    Rng& rng, std::vector<int> shape, double lo, double hi,
    const std::function<bool(const TensorD&)>& acceptable) {
  for (int attempt = 0; attempt < 10; ++attempt) {
    TensorD t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i)
      t[i] = lo + (hi - lo) * uniform_real(rng);
    if (!acceptable || acceptable(t)) return t;
  }
  throw std::runtime_error(
      "random_tensor_where: no acceptable sample in 10 attempts");
}

inline TensorD random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0,
                             double hi = 1.0) {
  return random_tensor_where(rng, std::move(shape), lo, hi, nullptr);
}

inline TensorD random_normal_tensor(Rng& rng, std::vector<int> shape,
                                    double stddev = 1.0) {
  TensorD t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = stddev * normal(rng);
  return t;
}

/// Objective helper: sum(g .* y) for a fixed upstream gradient g, the usual
/// way to turn a tensor-valued op into a scalar for finite differences.
inline double weighted_sum(const TensorD& y, const TensorD& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * g[i];
  return s;
}

}  // namespace chexfuse
