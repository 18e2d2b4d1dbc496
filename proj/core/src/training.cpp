#include "chexfuse/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "chexfuse/errors.hpp"
#include "chexfuse/ops.hpp"

namespace chexfuse {

AdamOptimizer::AdamOptimizer(std::vector<Param*> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamOptimizer::step(double lr) {
  ++t_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    if (!p.grad.all_finite()) {
      throw OptimizerError("non-finite gradient for parameter '" + p.name + "'");
    }
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const float b1 = static_cast<float>(beta1_);
    const float b2 = static_cast<float>(beta2_);
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      const float g = p.grad[j];
      m[j] = b1 * m[j] + (1.0f - b1) * g;
      v[j] = b2 * v[j] + (1.0f - b2) * g * g;
      const float mhat = static_cast<float>(m[j] / bias1);
      const float vhat = static_cast<float>(v[j] / bias2);
      p.value[j] -= static_cast<float>(lr) * mhat /
                    (std::sqrt(vhat) + static_cast<float>(eps_));
    }
  }
}

std::vector<std::pair<std::string, const Tensor*>> AdamOptimizer::state_tensors()
    const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(params_.size() * 2);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("optim." + params_[i]->name + ".m", &m_[i]);
    out.emplace_back("optim." + params_[i]->name + ".v", &v_[i]);
  }
  return out;
}

void AdamOptimizer::load_state(const Checkpoint& checkpoint) {
  if (!checkpoint.has_optimizer) {
    throw CheckpointCorruptError("checkpoint has no optimizer state");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor* m = checkpoint.find("optim." + params_[i]->name + ".m");
    const Tensor* v = checkpoint.find("optim." + params_[i]->name + ".v");
    if (!m || !v) {
      throw CheckpointCorruptError("checkpoint missing optimizer moments for '" +
                                   params_[i]->name + "'");
    }
    m_[i] = *m;
    v_[i] = *v;
  }
  t_ = checkpoint.optimizer_step;
}

double lr_on_plateau(const std::vector<double>& val_losses, double current_lr,
                     const TrainConfig& cfg) {
  const int n = static_cast<int>(val_losses.size());
  if (n <= cfg.plateau_patience) return current_lr;
  // The last `patience` epochs must each have failed to beat the best loss
  // seen before them by more than the improvement threshold.
  for (int i = n - cfg.plateau_patience; i < n; ++i) {
    double best_before = val_losses[0];
    for (int j = 1; j < i; ++j) best_before = std::min(best_before, val_losses[static_cast<std::size_t>(j)]);
    if (val_losses[static_cast<std::size_t>(i)] <
        best_before - cfg.plateau_min_improve) {
      return current_lr;  // improvement inside the window
    }
  }
  return std::max(current_lr / cfg.plateau_factor, cfg.lr_floor);
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,lr,seconds\n";
  char buf[160];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.9e,%.9e,%.9e,%.3f\n", row.epoch,
                  row.train_loss, row.val_loss, row.lr, row.seconds);
    out << buf;
  }
  return out.str();
}

namespace {

/// Per-class positive weights Nneg/Npos over the train set (1 when a class
/// has no positives or no negatives).
std::vector<double> positive_weights(const std::vector<Sample>& train_set) {
  std::vector<double> pos(14, 0.0);
  for (const auto& s : train_set) {
    for (int c = 0; c < 14; ++c) pos[static_cast<std::size_t>(c)] += s.labels[static_cast<std::size_t>(c)];
  }
  std::vector<double> weights(14, 1.0);
  const double total = static_cast<double>(train_set.size());
  for (int c = 0; c < 14; ++c) {
    const double p = pos[static_cast<std::size_t>(c)];
    if (p > 0.0 && p < total) weights[static_cast<std::size_t>(c)] = (total - p) / p;
  }
  return weights;
}

double weighted_bce(const Tensor& probs, const Tensor& labels,
                    const std::vector<double>& pos_weight, Tensor* dprobs) {
  const int n = probs.dim(0), c = probs.dim(1);
  const double inv = 1.0 / static_cast<double>(static_cast<std::size_t>(n) * c);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      const double p = std::min(std::max(static_cast<double>(probs.at2(i, j)), kBceEps),
                                1.0 - kBceEps);
      const double y = labels.at2(i, j);
      const double w = pos_weight[static_cast<std::size_t>(j)];
      sum -= w * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
      if (dprobs) {
        const double raw = probs.at2(i, j);
        dprobs->at2(i, j) =
            (raw <= kBceEps || raw >= 1.0 - kBceEps)
                ? 0.0f
                : static_cast<float>((-w * y / p + (1.0 - y) / (1.0 - p)) * inv);
      }
    }
  }
  return sum * inv;
}

Checkpoint make_snapshot(FusedClassifier<float>& model,
                         const std::map<std::string, std::string>& echo,
                         int epoch, double best_val_loss, double lr,
                         const std::vector<double>& val_history,
                         const AdamOptimizer* optimizer) {
  Checkpoint checkpoint;
  checkpoint.config = echo;
  checkpoint.epoch = epoch;
  checkpoint.best_val_loss = best_val_loss;
  checkpoint.lr = lr;
  checkpoint.val_history = val_history;
  checkpoint.tensors = snapshot_model(model);
  if (optimizer) {
    checkpoint.has_optimizer = true;
    checkpoint.optimizer_step = optimizer->step_count();
    for (const auto& [name, tensor] : optimizer->state_tensors()) {
      checkpoint.tensors.push_back({name, *tensor});
    }
  }
  return checkpoint;
}

}  // namespace

FitResult fit(FusedClassifier<float>& model, const std::vector<Sample>& train_set,
              const std::vector<Sample>& val_set, const TrainConfig& cfg,
              const std::map<std::string, std::string>& config_echo,
              const Checkpoint* resume) {
  cfg.validate();
  if (train_set.empty()) throw TrainingError("empty training set");
  if (val_set.empty()) throw TrainingError("empty validation set");

  AdamOptimizer optimizer(model.parameters(), cfg);
  double lr = cfg.lr;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<double> val_history;
  int start_epoch = 0;
  if (resume) {
    optimizer.load_state(*resume);
    lr = resume->lr;
    best_val_loss = resume->best_val_loss;
    val_history = resume->val_history;
    start_epoch = resume->epoch;
  }

  const std::vector<double> pos_weight =
      cfg.pos_weight ? positive_weights(train_set) : std::vector<double>(14, 1.0);

  FitResult result;
  bool have_best = false;
  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();

    // Train pass.
    const auto batches =
        make_batches(train_set, cfg.batch_size, cfg.seed, epoch, cfg.augment);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch& batch = batches[b];
      model.zero_grads();
      auto out = model.forward(batch.images, batch.meta, true);
      Tensor dprobs(out.probs.shape());
      const double loss =
          cfg.pos_weight
              ? weighted_bce(out.probs, batch.labels, pos_weight, &dprobs)
              : bce_loss(out.probs, batch.labels);
      if (!cfg.pos_weight) dprobs = bce_loss_backward(out.probs, batch.labels);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite train loss at epoch " +
                            std::to_string(epoch + 1) + " batch " +
                            std::to_string(b + 1));
      }
      model.backward(dprobs);
      optimizer.step(lr);
      const std::size_t n = static_cast<std::size_t>(batch.images.dim(0));
      loss_sum += loss * static_cast<double>(n);
      seen += n;
    }
    const double train_loss = loss_sum / static_cast<double>(seen);

    // Validation pass in eval mode, fixed order.
    const auto val_batches =
        make_batches(val_set, cfg.batch_size, cfg.seed, -1, false);
    double val_sum = 0.0;
    std::size_t val_seen = 0;
    for (const auto& batch : val_batches) {
      auto out = model.forward(batch.images, batch.meta, false);
      const double loss = bce_loss(out.probs, batch.labels);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite validation loss at epoch " +
                            std::to_string(epoch + 1));
      }
      const std::size_t n = static_cast<std::size_t>(batch.images.dim(0));
      val_sum += loss * static_cast<double>(n);
      val_seen += n;
    }
    const double val_loss = val_sum / static_cast<double>(val_seen);
    val_history.push_back(val_loss);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.log.rows.push_back({epoch + 1, train_loss, val_loss, lr, seconds});

    if (val_loss < best_val_loss) {
      best_val_loss = val_loss;
      result.best = make_snapshot(model, config_echo, epoch + 1, best_val_loss,
                                  lr, val_history, nullptr);
      have_best = true;
    }
    lr = lr_on_plateau(val_history, lr, cfg);
  }

  result.last = make_snapshot(model, config_echo, cfg.max_epochs, best_val_loss,
                              lr, val_history, &optimizer);
  if (!have_best) {
    // Zero-epoch runs (or resumes past max_epochs) still produce a best
    // checkpoint: the current model state.
    result.best = make_snapshot(model, config_echo, start_epoch, best_val_loss,
                                lr, val_history, nullptr);
  }
  return result;
}

}  // namespace chexfuse
