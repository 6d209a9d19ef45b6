// advnet: experiment driver for adversarially trained classifiers.
// Subcommands: train, attack, eval, game-lab, gradcheck.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "advnet/checkpoint.hpp"
#include "advnet/config.hpp"
#include "advnet/evalharness.hpp"
#include "advnet/gamelab.hpp"
#include "advnet/gradcheck.hpp"
#include "advnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace advnet;

namespace {

std::map<std::string, std::string> config_echo(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> echo;
  std::istringstream is(cfg.to_text());
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) echo[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return echo;
}

ExperimentConfig resolve_config(const std::string& preset, const std::string& config_path) {
  ExperimentConfig cfg;
  if (!preset.empty()) cfg = ExperimentConfig::preset(preset);
  if (!config_path.empty()) {
    // file entries override the preset baseline
    std::ifstream f(config_path);
    if (!f) throw IoError("cannot open config file " + config_path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(config_path + ":" + std::to_string(lineno) +
                          ": expected key=value");
      }
      cfg.apply(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  return cfg;
}

struct NamedPath {
  std::string id, path;
};

NamedPath split_named(const std::string& s, const char* what) {
  const std::size_t eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
    throw ConfigError(std::string(what) + " expects id=path, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

int run_train(const std::string& preset, const std::string& config_path,
              std::int64_t seed, const std::string& out, int divisor,
              const std::vector<std::string>& statics, const std::string& fixed_d_path) {
  ExperimentConfig cfg = resolve_config(preset, config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!out.empty()) cfg.out_dir = out;
  if (divisor > 0) cfg.divisor = divisor;
  cfg.validate();

  fs::create_directories(cfg.out_dir);
  cfg.save(cfg.out_dir + "/config.txt");

  Dataset ds = load_dataset(cfg.dataset);
  TrainerConfig tcfg = cfg.trainer_config();

  TrainResult res;
  switch (cfg.kind) {
    case TrainerKind::Standard:
      res = train_standard(tcfg, ds);
      break;
    case TrainerKind::AdversarialPgd:
      res = train_adv_pgd(tcfg, ds);
      break;
    case TrainerKind::Ensemble: {
      std::vector<Model<float>> loaded;
      for (const auto& p : statics)
        loaded.push_back(restore_discriminator(checkpoint_load(p)));
      std::vector<const Model<float>*> ptrs;
      for (auto& m : loaded) ptrs.push_back(&m);
      res = train_ensemble(tcfg, ds, ptrs);
      break;
    }
    case TrainerKind::AdversarialNetwork:
      res = train_adversarial_network(tcfg, ds);
      break;
    case TrainerKind::GeneratorOnly: {
      if (fixed_d_path.empty())
        throw ConfigError("generator-only training needs --fixed-d <checkpoint>");
      Model<float> fixed = restore_discriminator(checkpoint_load(fixed_d_path));
      res = train_generator_vs_fixed(tcfg, ds, fixed);
      break;
    }
  }

  Checkpoint ckpt;
  if (cfg.kind != TrainerKind::GeneratorOnly) {
    ckpt.d = ModelBlob::from(res.d);
    ckpt.d_opt = OptimizerBlob::from(res.d_opt);
  }
  if (res.g) {
    ckpt.g = ModelBlob::from(*res.g);
    ckpt.g_opt = OptimizerBlob::from(res.g_opt);
  }
  ckpt.iteration = res.iterations;
  ckpt.rng_state = res.rng_state;
  ckpt.config_echo = config_echo(cfg);
  checkpoint_save(ckpt, cfg.out_dir + "/checkpoint.advnet");
  res.metrics.save_csv(cfg.out_dir + "/metrics.csv");

  std::cout << "trained " << trainer_kind_name(cfg.kind) << " for "
            << res.iterations << " iterations -> " << cfg.out_dir << "\n";
  return 0;
}

int run_attack(const std::string& preset, const std::string& config_path,
               const std::string& ckpt_path, const std::string& id,
               std::int64_t seed, const std::string& out) {
  if (ckpt_path.empty()) throw ConfigError("attack needs --ckpt <checkpoint>");
  ExperimentConfig cfg = resolve_config(preset, config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.attack.validate();

  Checkpoint ckpt = checkpoint_load(ckpt_path);
  Model<float> model = restore_discriminator(ckpt);
  std::optional<Model<float>> gen;
  if (cfg.attack.family == AttackFamily::Generator) {
    const std::string gpath =
        cfg.attack.generator_ckpt.empty() ? ckpt_path : cfg.attack.generator_ckpt;
    gen = restore_generator(checkpoint_load(gpath));
  }

  Dataset ds = load_dataset(cfg.dataset);
  EvalEntry entry{id, &model, gen ? &*gen : nullptr};
  AdversarialSet set = materialize_attack(entry, ds, cfg.attack, cfg.seed);

  const std::string path = out.empty() ? id + ".advset" : out;
  if (!fs::path(path).parent_path().empty())
    fs::create_directories(fs::path(path).parent_path());
  save_adversarial_set(set, path);
  std::cout << "materialized " << set.attack << " set (" << ds.size()
            << " samples, eps " << set.eps << ") -> " << path << "\n";
  return 0;
}

int run_eval(const std::vector<std::string>& model_args,
             const std::vector<std::string>& surrogate_args,
             const std::string& dataset, double eps,
             const std::vector<std::string>& attack_names, std::int64_t seed,
             const std::string& out, int jobs) {
  if (jobs < 1) throw ConfigError("--jobs must be >= 1");
  if (model_args.empty()) {
    throw ConfigError("eval needs at least one --model id=checkpoint");
  }

  struct Loaded {
    std::string id;
    Model<float> model;
    std::optional<Model<float>> gen;
  };
  auto load_all = [](const std::vector<std::string>& args, const char* what) {
    std::vector<Loaded> out;
    for (const auto& a : args) {
      NamedPath np = split_named(a, what);
      Checkpoint ckpt = checkpoint_load(np.path);
      Loaded l{np.id, restore_discriminator(ckpt), std::nullopt};
      if (ckpt.g) l.gen = restore_generator(ckpt);
      out.push_back(std::move(l));
    }
    return out;
  };
  std::vector<Loaded> models = load_all(model_args, "--model");
  std::vector<Loaded> surrogates = load_all(surrogate_args, "--surrogate");

  std::vector<AttackSpec> attacks;
  for (const auto& name : attack_names) {
    AttackSpec spec;
    spec.family = parse_attack_family(name);
    spec.eps = eps;
    attacks.push_back(spec);
  }

  Dataset ds = load_dataset(dataset);
  auto entries = [](std::vector<Loaded>& v) {
    std::vector<EvalEntry> e;
    for (auto& l : v) e.push_back({l.id, &l.model, l.gen ? &*l.gen : nullptr});
    return e;
  };
  EvalReport rep =
      surrogates.empty()
          ? white_box_eval(entries(models), ds, attacks,
                           static_cast<std::uint64_t>(seed < 0 ? 0 : seed))
          : black_box_transfer(entries(models), entries(surrogates), ds, attacks,
                               static_cast<std::uint64_t>(seed < 0 ? 0 : seed));

  const std::string dir = out.empty() ? "." : out;
  fs::create_directories(dir);
  auto dump = [&](const std::string& name, const std::string& text) {
    std::ofstream f(dir + "/" + name, std::ios::binary);
    if (!f) throw IoError("cannot open " + dir + "/" + name + " for writing");
    f << text;
  };
  dump("report.csv", rep.to_csv());
  dump("report.json", rep.to_json());
  dump("report.txt", rep.to_text_table());
  std::cout << rep.to_text_table();
  return 0;
}

int run_gamelab(double a, double eta_d, double eta_g, double gamma, int steps,
                double theta0, double phi0, const std::string& mode,
                const std::string& out) {
  QuadraticGame game = QuadraticGame::scalar(a);
  GameState start;
  start.theta = Eigen::VectorXd::Constant(1, theta0);
  start.phi = Eigen::VectorXd::Constant(1, phi0);
  const HvpMode m = mode == "fd" ? HvpMode::FiniteDifference : HvpMode::Exact;
  DynamicsTrace trace = simulate(game, start, steps, eta_d, eta_g, gamma, m);
  const double radius = spectral_radius_oracle(game, eta_d, eta_g, gamma);

  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("cannot open " + out + " for writing");
    f << trace.to_csv();
  } else {
    std::cout << trace.to_csv();
  }
  std::printf("spectral radius %.6f, measured per-step growth %.6f\n", radius,
              trace.growth_rate());
  return 0;
}

int run_gradcheck(int coords, double step, std::int64_t seed) {
  const std::vector<std::string> archs = {"D1",    "D2:width=8", "G0",
                                          "G1:k=8", "G2:k=8",    "G3:k=8"};
  Rng rng(static_cast<std::uint64_t>(seed < 0 ? 0 : seed));
  bool all_ok = true;
  for (const auto& arch : archs) {
    Model<double> m = build_network<double>(arch, rng);
    Shape xs{2};
    xs.insert(xs.end(), m.input_shape.begin(), m.input_shape.end());
    Tensor<double> x(xs);
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.gaussian(0.0, 0.5);

    int classes = m.class_count;
    if (classes == 0) {
      // generators emit images; probe them through a flattening softmax loss
      Tensor<double> y = m.forward(x);
      const auto per = static_cast<int>(y.size() / y.dim(0));
      m.add(std::make_unique<Reshape<double>>(Shape{per}));
      classes = per;
    }
    std::vector<int> labels = {static_cast<int>(rng.uniform_int(0, classes - 1)),
                               static_cast<int>(rng.uniform_int(0, classes - 1))};
    GradCheckReport rep = grad_check(m, x, labels, coords, step, rng);
    const bool ok = rep.max_rel_err <= 1e-4;
    all_ok = all_ok && ok;
    std::printf("%-10s %s  max_rel_err=%.3e (%d coords, worst %s)\n", arch.c_str(),
                ok ? "PASS" : "FAIL", rep.max_rel_err, rep.coords_checked,
                rep.worst.c_str());
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial network training and evaluation"};
  app.require_subcommand(1);

  std::string preset, config_path, out, ckpt_path, id = "src", mode = "exact";
  std::string dataset = "mnist:split=test";
  std::int64_t seed = -1;
  int divisor = -1, jobs = 1, steps = 1000, coords = 3;
  double eps = 0.3, a = 1.0, eta_d = 0.1, eta_g = 0.1, gamma = 0.0;
  double theta0 = 1.0, phi0 = 1.0, fd = 1e-5;
  std::vector<std::string> statics, models, surrogates;
  std::vector<std::string> attack_names = {"fgs", "pgd"};
  std::string fixed_d;

  auto* train = app.add_subcommand("train", "train a model per config/preset");
  train->add_option("--preset", preset, "named recipe");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--seed", seed, "seed override");
  train->add_option("--out", out, "output directory");
  train->add_option("--divisor", divisor, "desk-scale divisor override");
  train->add_option("--static", statics, "static model checkpoints (ensemble)");
  train->add_option("--fixed-d", fixed_d, "frozen model checkpoint (generator-only)");

  auto* attack = app.add_subcommand("attack", "materialize an adversarial set");
  attack->add_option("--preset", preset, "named recipe");
  attack->add_option("--config", config_path, "key=value config file");
  attack->add_option("--ckpt", ckpt_path, "source model checkpoint")->required();
  attack->add_option("--id", id, "source model id");
  attack->add_option("--seed", seed, "seed override");
  attack->add_option("--out", out, "output file");

  auto* eval = app.add_subcommand("eval", "accuracy matrix over checkpoints");
  eval->add_option("--model", models, "defense checkpoints as id=path")->required();
  eval->add_option("--surrogate", surrogates, "surrogate checkpoints as id=path");
  eval->add_option("--dataset", dataset, "dataset spec");
  eval->add_option("--eps", eps, "perturbation budget");
  eval->add_option("--attacks", attack_names, "attack families");
  eval->add_option("--seed", seed, "attack seed");
  eval->add_option("--out", out, "output directory");
  eval->add_option("--jobs", jobs, "parallelism for the eval matrix");

  auto* lab = app.add_subcommand("game-lab", "scalar saddle-point dynamics");
  lab->add_option("--a", a, "bilinear coefficient");
  lab->add_option("--eta-d", eta_d, "descent step size");
  lab->add_option("--eta-g", eta_g, "ascent step size");
  lab->add_option("--gamma", gamma, "regularization weight");
  lab->add_option("--steps", steps, "simulation steps");
  lab->add_option("--theta0", theta0, "initial theta");
  lab->add_option("--phi0", phi0, "initial phi");
  lab->add_option("--mode", mode, "exact or fd");
  lab->add_option("--out", out, "trace CSV path");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gc->add_option("--coords", coords, "coordinates per tensor");
  gc->add_option("--step", fd, "finite-difference step");
  gc->add_option("--seed", seed, "rng seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return run_train(preset, config_path, seed, out, divisor, statics, fixed_d);
    if (attack->parsed())
      return run_attack(preset, config_path, ckpt_path, id, seed, out);
    if (eval->parsed())
      return run_eval(models, surrogates, dataset, eps, attack_names, seed, out, jobs);
    if (lab->parsed())
      return run_gamelab(a, eta_d, eta_g, gamma, steps, theta0, phi0, mode, out);
    if (gc->parsed()) return run_gradcheck(coords, fd, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
