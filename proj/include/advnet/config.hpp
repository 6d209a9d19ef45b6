#pragma once

#include <string>
#include <vector>

#include "advnet/attacks.hpp"
#include "advnet/trainer.hpp"

namespace advnet {

AttackFamily parse_attack_family(const std::string& s);
LabelMode parse_label_mode(const std::string& s);
std::string label_mode_name(LabelMode m);
OptimizerRule parse_optimizer_rule(const std::string& s);
std::string optimizer_rule_name(OptimizerRule r);

/// One experiment, expressed in full-scale units; the desk-scale divisor is
/// applied when the trainer config is materialized. Serializes to flat
/// key=value text with section prefixes (run., model., minimax., attack.).
struct ExperimentConfig {
  std::string preset_name;
  TrainerKind kind = TrainerKind::Standard;
  std::string d_arch = "D1";
  std::string g_arch = "G0";
  std::string dataset = "mnist";
  std::uint64_t seed = 0;
  int divisor = 20;
  std::string out_dir = ".";
  bool augment = false;
  MinimaxConfig mm;   // iterations and lr_drop_at are full-scale here
  AttackSpec attack;

  /// Applies one key=value assignment; throws ConfigError naming the key.
  void apply(const std::string& key, const std::string& value);
  std::string to_text() const;
  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
  void save(const std::string& path) const;

  /// Named recipes scaled from the full-scale schedules by `divisor`.
  static ExperimentConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();

  /// Desk-scale trainer config: iteration counts divided by `divisor`.
  TrainerConfig trainer_config() const;

  void validate() const;
};

}  // namespace advnet
