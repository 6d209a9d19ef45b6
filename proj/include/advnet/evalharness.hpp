#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advnet/attacks.hpp"
#include "advnet/data.hpp"
#include "advnet/model.hpp"

namespace advnet {

/// One accuracy measurement: a defense model evaluated against an attack.
/// source names the model the adversarial set was generated on ("-" for the
/// clean column, the defense itself for white-box cells).
struct EvalCell {
  std::string defense;
  std::string attack;  // "none", "fgs", "pgd", "least-likely", "generator"
  std::string source;
  double accuracy = 0.0;
  std::int64_t n = 0;
};

struct EvalReport {
  std::vector<EvalCell> cells;  // ordered: rows by defense, columns per spec
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::string bn_mode = "inference";
  std::string dataset;

  const EvalCell* find(const std::string& defense, const std::string& attack,
                       const std::string& source) const;

  std::string to_csv() const;
  std::string to_json() const;
  /// Columns ordered No Noise, FGS, PGD, then transfer columns grouped by
  /// source model.
  std::string to_text_table() const;
  static EvalReport from_json(const std::string& text);
};

/// Fraction of samples where argmax of the logits equals the label, ties
/// broken toward the lowest class index. Runs a clone in inference mode.
double accuracy(const Model<float>& model, const Tensor<float>& images,
                const std::vector<int>& labels, int batch_size = 256);
double accuracy(const Model<float>& model, const Dataset& ds, int batch_size = 256);

/// A checkpointed model under its experiment id; generator is non-null only
/// when the generator attack column applies.
struct EvalEntry {
  std::string id;
  const Model<float>* model = nullptr;
  const Model<float>* generator = nullptr;
};

/// Adversarial inputs materialized once and reused across defense rows.
struct AdversarialSet {
  std::string attack;
  std::string source;
  double eps = 0.0;
  Tensor<float> images;
  std::vector<int> labels;
};

AdversarialSet materialize_attack(const EvalEntry& source, const Dataset& ds,
                                  const AttackSpec& spec, std::uint64_t base_seed);

/// Binary container for adversarial sets (magic "ADVSET01", f32 little-endian
/// payload, trailing CRC-32).
void save_adversarial_set(const AdversarialSet& set, const std::string& path);
AdversarialSet load_adversarial_set(const std::string& path);

/// One row per model: clean accuracy plus one cell per attack generated on
/// the model itself.
EvalReport white_box_eval(const std::vector<EvalEntry>& models, const Dataset& ds,
                          const std::vector<AttackSpec>& attacks,
                          std::uint64_t seed);

/// Full transfer matrix: adversarial sets generated once per (surrogate,
/// attack), then every defense evaluated on every set. Self-transfer cells
/// are bit-identical to white-box cells by construction.
EvalReport black_box_transfer(const std::vector<EvalEntry>& defenses,
                              const std::vector<EvalEntry>& surrogates,
                              const Dataset& ds,
                              const std::vector<AttackSpec>& attacks,
                              std::uint64_t seed);

}  // namespace advnet
