#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "chexfuse/model.hpp"
#include "chexfuse/tensor.hpp"

// Versioned binary checkpoint:
//   "CXPP" | format_version u32 LE | metadata length u64 LE |
//   UTF-8 JSON metadata | tensor payloads, float32 LE, directory order.
// The metadata carries the config echo, epoch counters, training state, and
// the tensor directory (name, shape, byte offset relative to the payload
// section). Round trips are bit-exact.

namespace chexfuse {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'C', 'X', 'P', 'P'};

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::map<std::string, std::string> config;
  int epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double lr = 0.0;
  std::vector<double> val_history;  // per-epoch validation losses
  bool has_optimizer = false;
  long long optimizer_step = 0;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);

/// Throws CheckpointCorruptError (bad magic, truncation, inconsistent
/// directory) or CheckpointVersionError.
Checkpoint load_checkpoint(const std::string& path);

/// Snapshot of all model parameters and batch-norm running stats, in
/// parameter order followed by state order.
std::vector<NamedTensor> snapshot_model(FusedClassifier<float>& model);

/// Restores tensors by name; throws CheckpointCorruptError on missing names
/// or shape mismatches.
void restore_model(FusedClassifier<float>& model, const Checkpoint& checkpoint);

}  // namespace chexfuse
