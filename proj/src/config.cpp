#include "advnet/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace advnet {

AttackFamily parse_attack_family(const std::string& s) {
  if (s == "fgs") return AttackFamily::Fgs;
  if (s == "pgd") return AttackFamily::Pgd;
  if (s == "least-likely") return AttackFamily::LeastLikely;
  if (s == "generator") return AttackFamily::Generator;
  throw ConfigError("unknown attack family '" + s + "'");
}

LabelMode parse_label_mode(const std::string& s) {
  if (s == "true-label") return LabelMode::TrueLabel;
  if (s == "most-likely") return LabelMode::MostLikely;
  if (s == "least-likely") return LabelMode::LeastLikelyClass;
  throw ConfigError("unknown label mode '" + s + "'");
}

std::string label_mode_name(LabelMode m) {
  switch (m) {
    case LabelMode::TrueLabel: return "true-label";
    case LabelMode::MostLikely: return "most-likely";
    case LabelMode::LeastLikelyClass: return "least-likely";
  }
  return "?";
}

OptimizerRule parse_optimizer_rule(const std::string& s) {
  if (s == "sgd-momentum") return OptimizerRule::SgdMomentum;
  if (s == "adam") return OptimizerRule::Adam;
  throw ConfigError("unknown optimizer rule '" + s + "'");
}

std::string optimizer_rule_name(OptimizerRule r) {
  return r == OptimizerRule::Adam ? "adam" : "sgd-momentum";
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::int64_t i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::apply(const std::string& key, const std::string& value) {
  try {
    if (key == "run.kind") kind = parse_trainer_kind(value);
    else if (key == "run.preset") preset_name = value;
    else if (key == "run.dataset") dataset = value;
    else if (key == "run.seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "run.divisor") divisor = static_cast<int>(parse_int(key, value));
    else if (key == "run.out") out_dir = value;
    else if (key == "run.augment") augment = parse_bool(key, value);
    else if (key == "model.d") d_arch = value;
    else if (key == "model.g") g_arch = value;
    else if (key == "minimax.lambda") mm.lambda = parse_double(key, value);
    else if (key == "minimax.gamma") mm.gamma = parse_double(key, value);
    else if (key == "minimax.eps") mm.eps = parse_double(key, value);
    else if (key == "minimax.eta_d") mm.eta_d = parse_double(key, value);
    else if (key == "minimax.eta_g") mm.eta_g = parse_double(key, value);
    else if (key == "minimax.momentum") mm.momentum = parse_double(key, value);
    else if (key == "minimax.adam_beta1") mm.adam_beta1 = parse_double(key, value);
    else if (key == "minimax.adam_beta2") mm.adam_beta2 = parse_double(key, value);
    else if (key == "minimax.d_rule") mm.d_rule = parse_optimizer_rule(value);
    else if (key == "minimax.g_rule") mm.g_rule = parse_optimizer_rule(value);
    else if (key == "minimax.weight_decay_d") mm.weight_decay_d = parse_double(key, value);
    else if (key == "minimax.weight_decay_g") mm.weight_decay_g = parse_double(key, value);
    else if (key == "minimax.g_steps_per_batch")
      mm.g_steps_per_batch = static_cast<int>(parse_int(key, value));
    else if (key == "minimax.g_updates_per_d")
      mm.g_updates_per_d = static_cast<int>(parse_int(key, value));
    else if (key == "minimax.fd_step") mm.fd_step = parse_double(key, value);
    else if (key == "minimax.iterations") mm.iterations = parse_int(key, value);
    else if (key == "minimax.batch_size")
      mm.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "minimax.lr_drop_at") mm.lr_drop_at = parse_int(key, value);
    else if (key == "minimax.lr_drop_factor") mm.lr_drop_factor = parse_double(key, value);
    else if (key == "attack.family") attack.family = parse_attack_family(value);
    else if (key == "attack.eps") attack.eps = parse_double(key, value);
    else if (key == "attack.delta") attack.delta = parse_double(key, value);
    else if (key == "attack.steps") attack.steps = static_cast<int>(parse_int(key, value));
    else if (key == "attack.random_init") attack.random_init = parse_bool(key, value);
    else if (key == "attack.label_mode") attack.label_mode = parse_label_mode(value);
    else if (key == "attack.generator_ckpt") attack.generator_ckpt = value;
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os << "run.kind=" << trainer_kind_name(kind) << "\n";
  if (!preset_name.empty()) os << "run.preset=" << preset_name << "\n";
  os << "run.dataset=" << dataset << "\n";
  os << "run.seed=" << seed << "\n";
  os << "run.divisor=" << divisor << "\n";
  os << "run.out=" << out_dir << "\n";
  os << "run.augment=" << (augment ? "true" : "false") << "\n";
  os << "model.d=" << d_arch << "\n";
  os << "model.g=" << g_arch << "\n";
  os << "minimax.lambda=" << fmt(mm.lambda) << "\n";
  os << "minimax.gamma=" << fmt(mm.gamma) << "\n";
  os << "minimax.eps=" << fmt(mm.eps) << "\n";
  os << "minimax.eta_d=" << fmt(mm.eta_d) << "\n";
  os << "minimax.eta_g=" << fmt(mm.eta_g) << "\n";
  os << "minimax.momentum=" << fmt(mm.momentum) << "\n";
  os << "minimax.adam_beta1=" << fmt(mm.adam_beta1) << "\n";
  os << "minimax.adam_beta2=" << fmt(mm.adam_beta2) << "\n";
  os << "minimax.d_rule=" << optimizer_rule_name(mm.d_rule) << "\n";
  os << "minimax.g_rule=" << optimizer_rule_name(mm.g_rule) << "\n";
  os << "minimax.weight_decay_d=" << fmt(mm.weight_decay_d) << "\n";
  os << "minimax.weight_decay_g=" << fmt(mm.weight_decay_g) << "\n";
  os << "minimax.g_steps_per_batch=" << mm.g_steps_per_batch << "\n";
  os << "minimax.g_updates_per_d=" << mm.g_updates_per_d << "\n";
  os << "minimax.fd_step=" << fmt(mm.fd_step) << "\n";
  os << "minimax.iterations=" << mm.iterations << "\n";
  os << "minimax.batch_size=" << mm.batch_size << "\n";
  os << "minimax.lr_drop_at=" << mm.lr_drop_at << "\n";
  os << "minimax.lr_drop_factor=" << fmt(mm.lr_drop_factor) << "\n";
  os << "attack.family=" << attack_family_name(attack.family) << "\n";
  os << "attack.eps=" << fmt(attack.eps) << "\n";
  os << "attack.delta=" << fmt(attack.delta) << "\n";
  os << "attack.steps=" << attack.steps << "\n";
  os << "attack.random_init=" << (attack.random_init ? "true" : "false") << "\n";
  os << "attack.label_mode=" << label_mode_name(attack.label_mode) << "\n";
  if (!attack.generator_ckpt.empty())
    os << "attack.generator_ckpt=" << attack.generator_ckpt << "\n";
  return os.str();
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    }
    cfg.apply(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const std::string s = to_text();
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw IoError("short write to " + path);
}

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
  ExperimentConfig cfg;
  cfg.preset_name = name;
  cfg.dataset = "mnist:n=10000";
  cfg.mm.iterations = 200000;  // full scale; trainer_config applies the divisor
  cfg.mm.eps = 0.3;

  if (name == "mnist-standard-desk") {
    cfg.kind = TrainerKind::Standard;
  } else if (name == "mnist-pgd-desk") {
    cfg.kind = TrainerKind::AdversarialPgd;
    cfg.attack.family = AttackFamily::Pgd;
    cfg.attack.eps = 0.3;  // delta defaults to eps/4, 10 steps
  } else if (name == "mnist-advnet-desk") {
    cfg.kind = TrainerKind::AdversarialNetwork;
    cfg.mm.g_updates_per_d = 5;
    cfg.mm.g_steps_per_batch = 5;
    cfg.mm.weight_decay_d = 1e-5;
    cfg.mm.weight_decay_g = 1e-5;
  } else if (name == "mnist-ensemble-desk") {
    cfg.kind = TrainerKind::Ensemble;
  } else if (name == "mnist-genonly-desk") {
    cfg.kind = TrainerKind::GeneratorOnly;
    cfg.mm.weight_decay_g = 1e-5;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return cfg;
}

std::vector<std::string> ExperimentConfig::preset_names() {
  return {"mnist-standard-desk", "mnist-pgd-desk", "mnist-advnet-desk",
          "mnist-ensemble-desk", "mnist-genonly-desk"};
}

TrainerConfig ExperimentConfig::trainer_config() const {
  validate();
  TrainerConfig t;
  t.kind = kind;
  t.d_arch = d_arch;
  t.g_arch = g_arch;
  t.seed = seed;
  t.augment = augment;
  t.mm = mm;
  t.mm.iterations = std::max<std::int64_t>(0, mm.iterations / divisor);
  if (mm.lr_drop_at >= 0) t.mm.lr_drop_at = mm.lr_drop_at / divisor;
  return t;
}

void ExperimentConfig::validate() const {
  if (divisor < 1) throw ConfigError("config key 'run.divisor': must be >= 1");
  if (mm.iterations < 0) throw ConfigError("config key 'minimax.iterations': must be >= 0");
  parse_arch(d_arch);
  parse_arch(g_arch);
  mm.validate();
  attack.validate();
}

}  // namespace advnet
