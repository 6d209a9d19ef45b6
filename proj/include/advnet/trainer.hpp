#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "advnet/data.hpp"
#include "advnet/minimax.hpp"

namespace advnet {

/// One metrics sample. Fields that do not apply (adversarial loss for the
/// standard trainer, accuracy off the probe cadence) are NaN and serialize
/// as empty CSV cells.
struct MetricsRow {
  std::int64_t iter = 0;
  double clean_loss = std::numeric_limits<double>::quiet_NaN();
  double adv_loss = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct MetricsLog {
  std::vector<MetricsRow> rows;

  /// Deterministic body; the optional header line carries the only
  /// non-reproducible content (a timestamp).
  std::string to_csv(bool timestamp_header = true) const;
  void save_csv(const std::string& path, bool timestamp_header = true) const;
};

/// Aborts a run whose clean loss stays above 10x its initial value for 1000
/// consecutive iterations.
class DivergenceDetector {
 public:
  explicit DivergenceDetector(int patience = 1000, double factor = 10.0)
      : patience_(patience), factor_(factor) {}

  void observe(std::int64_t iter, double clean_loss) {
    if (initial_ < 0) initial_ = std::max(clean_loss, 1e-12);
    if (clean_loss > factor_ * initial_) {
      if (++streak_ >= patience_) {
        throw TrainingError("diverged: clean loss above " +
                            std::to_string(factor_) + "x initial for " +
                            std::to_string(patience_) +
                            " consecutive iterations (iteration " +
                            std::to_string(iter) + ")");
      }
    } else {
      streak_ = 0;
    }
  }

 private:
  int patience_;
  double factor_;
  double initial_ = -1.0;
  int streak_ = 0;
};

struct TrainerConfig {
  TrainerKind kind = TrainerKind::Standard;
  std::string d_arch = "D1";
  std::string g_arch = "G0";
  MinimaxConfig mm;
  std::uint64_t seed = 0;
  bool augment = false;       // pad-crop + hflip (CIFAR-style runs)
  int loss_every = 100;       // metrics cadence
  int acc_every = 1000;       // probe accuracy cadence
  int probe_size = 1000;      // fixed probe subset size
};

struct TrainResult {
  Model<float> d;
  std::optional<Model<float>> g;
  Optimizer<float> d_opt;
  Optimizer<float> g_opt;
  MetricsLog metrics;
  std::string rng_state;
  std::int64_t iterations = 0;
};

/// Plain mini-batch descent on clean cross-entropy.
TrainResult train_standard(const TrainerConfig& cfg, const Dataset& ds);

/// Each step trains on the PGD-perturbed batch only (delta = eps/4, 10 steps).
TrainResult train_adv_pgd(const TrainerConfig& cfg, const Dataset& ds);

/// Each batch is clean samples plus signed-gradient, iterated, and
/// least-likely-class adversarial copies from every frozen static model.
TrainResult train_ensemble(const TrainerConfig& cfg, const Dataset& ds,
                           const std::vector<const Model<float>*>& statics);

/// The joint game: g_updates_per_d generator updates (g_steps_per_batch inner
/// steps each) then one gradient-regularized discriminator update, fresh
/// batch per outer iteration.
TrainResult train_adversarial_network(const TrainerConfig& cfg, const Dataset& ds);

/// Pure ascent of the generator against a frozen discriminator.
TrainResult train_generator_vs_fixed(const TrainerConfig& cfg, const Dataset& ds,
                                     const Model<float>& fixed_d);

}  // namespace advnet
