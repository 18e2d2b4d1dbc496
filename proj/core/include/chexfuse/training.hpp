#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chexfuse/checkpoint.hpp"
#include "chexfuse/data.hpp"
#include "chexfuse/fusion_head.hpp"
#include "chexfuse/model.hpp"

// Optimization loop: Adam, mean BCE, plateau learning-rate decay, best-model
// selection on validation loss, and bit-exact resume from a checkpoint.

namespace chexfuse {

struct TrainConfig {
  int batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double plateau_factor = 10.0;
  int plateau_patience = 1;
  double plateau_min_improve = 1e-4;
  double lr_floor = 1e-6;
  int max_epochs = 44;
  std::uint64_t seed = 0;
  bool augment = true;
  bool pos_weight = false;  // optional per-class positive weighting in the loss
  HeadInit head_init = HeadInit::kIdentityStart;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lr < 0.0) throw ConfigError("train: lr must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw ConfigError("train: betas must be in [0,1)");
    }
    if (max_epochs < 0) throw ConfigError("train: max_epochs must be >= 0");
  }
};

/// Adam with bias correction. First/second moment tensors are keyed by the
/// parameter list order, which is fixed by model construction.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Param*> params, const TrainConfig& cfg);

  /// One update over all parameters. Throws OptimizerError naming the first
  /// parameter whose gradient is non-finite.
  void step(double lr);

  long long step_count() const { return t_; }

  /// Moment tensors named for the checkpoint directory
  /// ("optim.<param>.m" / "optim.<param>.v").
  std::vector<std::pair<std::string, const Tensor*>> state_tensors() const;

  /// Restores moments and step counter saved by state_tensors().
  void load_state(const Checkpoint& checkpoint);

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  long long t_ = 0;
  double beta1_, beta2_, eps_;
};

/// Plateau rule: if validation loss failed to improve on the running best by
/// more than plateau_min_improve for plateau_patience consecutive epochs,
/// divide the rate by plateau_factor, floored at lr_floor. Pure function of
/// the loss history (val_losses includes the epoch just finished).
double lr_on_plateau(const std::vector<double>& val_losses, double current_lr,
                     const TrainConfig& cfg);

struct TrainLogRow {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;  // wall time; the one nondeterministic column
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::string to_csv() const;  // header: epoch,train_loss,val_loss,lr,seconds
};

struct FitResult {
  Checkpoint best;
  Checkpoint last;
  TrainLog log;
};

/// Runs the training protocol for cfg.max_epochs epochs. `config_echo` is
/// stored verbatim in emitted checkpoints. Passing `resume` (a checkpoint
/// with optimizer state) continues an interrupted run; the caller must have
/// already restored the model tensors from it.
FitResult fit(FusedClassifier<float>& model, const std::vector<Sample>& train_set,
              const std::vector<Sample>& val_set, const TrainConfig& cfg,
              const std::map<std::string, std::string>& config_echo,
              const Checkpoint* resume = nullptr);

}  // namespace chexfuse
