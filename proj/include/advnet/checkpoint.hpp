#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advnet/model.hpp"
#include "advnet/optim.hpp"

namespace advnet {

/// Snapshot of one network: architecture id plus named parameter and
/// persistent-state tensors (batch-norm running stats).
struct ModelBlob {
  std::string arch;
  Shape input_shape;
  int class_count = 0;
  std::vector<std::pair<std::string, Tensor<float>>> params;
  std::vector<std::pair<std::string, Tensor<float>>> state;

  static ModelBlob from(Model<float>& m);
  /// Rebuilds the architecture and overwrites every tensor by name; throws
  /// ConfigError when the stored entries do not match the architecture.
  Model<float> restore() const;
};

struct OptimizerBlob {
  std::string rule;  // "sgd-momentum" or "adam"
  double lr = 0.0;
  double momentum = 0.0;
  double beta1 = 0.0, beta2 = 0.0;
  double weight_decay = 0.0;
  std::int64_t steps = 0;
  std::vector<Tensor<float>> buffers;  // velocity, or first then second moments

  static OptimizerBlob from(Optimizer<float>& opt);
  Optimizer<float> restore() const;
};

struct Checkpoint {
  std::optional<ModelBlob> d;
  std::optional<ModelBlob> g;
  std::optional<OptimizerBlob> d_opt;
  std::optional<OptimizerBlob> g_opt;
  std::int64_t iteration = 0;
  std::string rng_state;
  std::map<std::string, std::string> config_echo;
};

/// Binary container: magic "ADVNET01", version, JSON manifest, 32-bit IEEE-754
/// little-endian tensor payload, trailing CRC-32. Load failures raise
/// FormatError (bad magic), VersionError, TruncationError, or CrcError.
void checkpoint_save(const Checkpoint& ckpt, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

/// Role-checked restores: throw ConfigError when the checkpoint holds the
/// wrong kind of network (e.g. a generator where a classifier is expected).
Model<float> restore_discriminator(const Checkpoint& ckpt);
Model<float> restore_generator(const Checkpoint& ckpt);

}  // namespace advnet
