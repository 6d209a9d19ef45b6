#include "advnet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "advnet/evalharness.hpp"

namespace advnet {

namespace {

std::string fmt_cell(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

Optimizer<float> make_optimizer(OptimizerRule rule, const MinimaxConfig& mm,
                                double lr, double wd) {
  if (rule == OptimizerRule::Adam) {
    return Optimizer<float>::adam(static_cast<float>(lr),
                                  static_cast<float>(mm.adam_beta1),
                                  static_cast<float>(mm.adam_beta2),
                                  static_cast<float>(wd));
  }
  return Optimizer<float>::sgd(static_cast<float>(lr),
                               static_cast<float>(mm.momentum),
                               static_cast<float>(wd));
}

/// Shared per-iteration bookkeeping: lr schedule, metrics cadence, and the
/// 10x-clean-loss divergence detector.
class RunState {
 public:
  RunState(const TrainerConfig& cfg, const Dataset& ds)
      : cfg_(cfg),
        probe_(subset(ds, 0,
                      std::min<std::int64_t>(cfg.probe_size, ds.size()))) {}

  void maybe_drop_lr(std::int64_t it, Optimizer<float>* d, Optimizer<float>* g) {
    if (it == cfg_.mm.drop_at() && it > 0) {
      if (d) d->set_lr(d->lr() * static_cast<float>(cfg_.mm.lr_drop_factor));
      if (g) g->set_lr(g->lr() * static_cast<float>(cfg_.mm.lr_drop_factor));
    }
  }

  void observe(std::int64_t it, double clean_loss, double adv_loss,
               MetricsLog& log, Model<float>* probe_model) {
    if (!std::isfinite(clean_loss)) {
      throw TrainingError("iteration " + std::to_string(it) + ": non-finite loss");
    }
    detector_.observe(it, clean_loss);
    const bool want_loss = (it + 1) % cfg_.loss_every == 0;
    const bool want_acc =
        probe_model && ((it + 1) % cfg_.acc_every == 0 || it + 1 == cfg_.mm.iterations);
    if (!want_loss && !want_acc) return;
    MetricsRow row;
    row.iter = it + 1;
    row.clean_loss = clean_loss;
    row.adv_loss = adv_loss;
    if (want_acc) row.accuracy = accuracy(*probe_model, probe_.images, probe_.labels);
    log.rows.push_back(row);
  }

  const Dataset& probe() const { return probe_; }

 private:
  const TrainerConfig& cfg_;
  Dataset probe_;
  DivergenceDetector detector_;
};

double clean_step(Model<float>& d, Optimizer<float>& opt, const Tensor<float>& x,
                  const std::vector<int>& labels) {
  d.zero_grads();
  Tensor<float> logits = d.forward(x);
  auto ce = softmax_cross_entropy(logits, labels);
  d.backward(ce.dlogits);
  opt.step(d.params());
  return static_cast<double>(ce.loss);
}

Tensor<float> concat_batches(const std::vector<const Tensor<float>*>& parts) {
  Shape s = parts[0]->shape;
  int n = 0;
  for (auto* p : parts) n += p->dim(0);
  s[0] = n;
  Tensor<float> out(s);
  float* dst = out.ptr();
  for (auto* p : parts) {
    std::memcpy(dst, p->ptr(), static_cast<std::size_t>(p->size()) * sizeof(float));
    dst += p->size();
  }
  return out;
}

}  // namespace

std::string MetricsLog::to_csv(bool timestamp_header) const {
  std::ostringstream os;
  if (timestamp_header) {
    char buf[64];
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    os << "# generated " << buf << "\n";
  }
  os << "iter,clean_loss,adv_loss,accuracy\n";
  for (const auto& r : rows) {
    os << r.iter << "," << fmt_cell(r.clean_loss) << "," << fmt_cell(r.adv_loss)
       << "," << fmt_cell(r.accuracy) << "\n";
  }
  return os.str();
}

void MetricsLog::save_csv(const std::string& path, bool timestamp_header) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const std::string s = to_csv(timestamp_header);
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw IoError("short write to " + path);
}

TrainResult train_standard(const TrainerConfig& cfg, const Dataset& ds) {
  cfg.mm.validate();
  Rng rng(cfg.seed);
  TrainResult res;
  res.d = build_network<float>(cfg.d_arch, rng);
  res.d_opt = make_optimizer(cfg.mm.d_rule, cfg.mm, cfg.mm.eta_d, cfg.mm.weight_decay_d);
  BatchIterator batches(ds, cfg.mm.batch_size, rng.raw());
  RunState run(cfg, ds);

  for (std::int64_t it = 0; it < cfg.mm.iterations; ++it) {
    run.maybe_drop_lr(it, &res.d_opt, nullptr);
    auto b = batches.next();
    if (cfg.augment) b.x = augment(b.x, rng);
    const double loss = clean_step(res.d, res.d_opt, b.x, b.labels);
    run.observe(it, loss, std::numeric_limits<double>::quiet_NaN(), res.metrics, &res.d);
  }
  res.rng_state = rng.state();
  res.iterations = cfg.mm.iterations;
  return res;
}

TrainResult train_adv_pgd(const TrainerConfig& cfg, const Dataset& ds) {
  cfg.mm.validate();
  Rng rng(cfg.seed);
  TrainResult res;
  res.d = build_network<float>(cfg.d_arch, rng);
  res.d_opt = make_optimizer(cfg.mm.d_rule, cfg.mm, cfg.mm.eta_d, cfg.mm.weight_decay_d);
  BatchIterator batches(ds, cfg.mm.batch_size, rng.raw());
  RunState run(cfg, ds);

  AttackSpec pgd;
  pgd.family = AttackFamily::Pgd;
  pgd.eps = cfg.mm.eps;
  pgd.random_init = cfg.mm.eps > 0;

  for (std::int64_t it = 0; it < cfg.mm.iterations; ++it) {
    run.maybe_drop_lr(it, &res.d_opt, nullptr);
    auto b = batches.next();
    if (cfg.augment) b.x = augment(b.x, rng);
    Tensor<float> adv = pgd_attack(res.d, b.x, b.labels, pgd, rng);
    const double loss = clean_step(res.d, res.d_opt, adv, b.labels);
    run.observe(it, loss, std::numeric_limits<double>::quiet_NaN(), res.metrics, &res.d);
  }
  res.rng_state = rng.state();
  res.iterations = cfg.mm.iterations;
  return res;
}

TrainResult train_ensemble(const TrainerConfig& cfg, const Dataset& ds,
                           const std::vector<const Model<float>*>& statics) {
  cfg.mm.validate();
  for (auto* m : statics) {
    if (!m) throw ConfigError("ensemble trainer: missing static model");
  }
  Rng rng(cfg.seed);
  TrainResult res;
  res.d = build_network<float>(cfg.d_arch, rng);
  res.d_opt = make_optimizer(cfg.mm.d_rule, cfg.mm, cfg.mm.eta_d, cfg.mm.weight_decay_d);
  BatchIterator batches(ds, cfg.mm.batch_size, rng.raw());
  RunState run(cfg, ds);

  AttackSpec fgs;
  fgs.family = AttackFamily::Fgs;
  fgs.eps = cfg.mm.eps;
  fgs.label_mode = LabelMode::MostLikely;
  AttackSpec pgd;
  pgd.family = AttackFamily::Pgd;
  pgd.eps = cfg.mm.eps;
  pgd.random_init = cfg.mm.eps > 0;
  AttackSpec ll;
  ll.family = AttackFamily::LeastLikely;
  ll.eps = cfg.mm.eps;

  for (std::int64_t it = 0; it < cfg.mm.iterations; ++it) {
    run.maybe_drop_lr(it, &res.d_opt, nullptr);
    auto b = batches.next();
    if (cfg.augment) b.x = augment(b.x, rng);

    std::vector<Tensor<float>> parts;
    parts.reserve(1 + 3 * statics.size());
    parts.push_back(b.x);
    for (auto* m : statics) {
      parts.push_back(fgs_attack(*m, b.x, b.labels, fgs));
      parts.push_back(pgd_attack(*m, b.x, b.labels, pgd, rng));
      parts.push_back(least_likely_attack(*m, b.x, ll));
    }
    std::vector<const Tensor<float>*> ptrs;
    for (auto& p : parts) ptrs.push_back(&p);
    Tensor<float> x = concat_batches(ptrs);
    std::vector<int> labels;
    for (std::size_t p = 0; p < parts.size(); ++p)
      labels.insert(labels.end(), b.labels.begin(), b.labels.end());

    const double loss = clean_step(res.d, res.d_opt, x, labels);
    run.observe(it, loss, std::numeric_limits<double>::quiet_NaN(), res.metrics, &res.d);
  }
  res.rng_state = rng.state();
  res.iterations = cfg.mm.iterations;
  return res;
}

TrainResult train_adversarial_network(const TrainerConfig& cfg, const Dataset& ds) {
  cfg.mm.validate();
  Rng rng(cfg.seed);
  TrainResult res;
  res.d = build_network<float>(cfg.d_arch, rng);
  res.g = build_network<float>(cfg.g_arch, rng);
  res.d_opt = make_optimizer(cfg.mm.d_rule, cfg.mm, cfg.mm.eta_d, cfg.mm.weight_decay_d);
  res.g_opt = make_optimizer(cfg.mm.g_rule, cfg.mm, cfg.mm.eta_g, cfg.mm.weight_decay_g);
  BatchIterator batches(ds, cfg.mm.batch_size, rng.raw());
  RunState run(cfg, ds);
  const bool needs_z = generator_input_kind(cfg.g_arch) == GenInput::Noise;

  for (std::int64_t it = 0; it < cfg.mm.iterations; ++it) {
    run.maybe_drop_lr(it, &res.d_opt, &res.g_opt);
    auto b = batches.next();
    if (cfg.augment) b.x = augment(b.x, rng);

    Tensor<float> z;
    const Tensor<float>* zp = nullptr;
    if (needs_z) {
      z = Tensor<float>(Shape{b.x.dim(0), res.g->input_shape[0]});
      for (std::int64_t i = 0; i < z.size(); ++i)
        z[i] = static_cast<float>(rng.gaussian());
      zp = &z;
    }

    try {
      for (int u = 0; u < cfg.mm.g_updates_per_d; ++u)
        generator_update(*res.g, res.d, b.x, b.labels, cfg.mm, res.g_opt, {}, zp);
      auto eval = discriminator_update(res.d, *res.g, b.x, b.labels, cfg.mm,
                                       res.d_opt, {}, zp);
      run.observe(it, static_cast<double>(eval.clean_loss),
                  static_cast<double>(eval.adv_loss), res.metrics, &res.d);
    } catch (const TrainingError& e) {
      throw TrainingError("iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  res.rng_state = rng.state();
  res.iterations = cfg.mm.iterations;
  return res;
}

TrainResult train_generator_vs_fixed(const TrainerConfig& cfg, const Dataset& ds,
                                     const Model<float>& fixed_d) {
  cfg.mm.validate();
  Rng rng(cfg.seed);
  TrainResult res;
  res.d = fixed_d.clone();
  res.d.mode = Mode::Eval;  // the deployed model under attack
  res.d.bn_update = false;
  res.g = build_network<float>(cfg.g_arch, rng);
  res.g_opt = make_optimizer(cfg.mm.g_rule, cfg.mm, cfg.mm.eta_g, cfg.mm.weight_decay_g);
  BatchIterator batches(ds, cfg.mm.batch_size, rng.raw());
  RunState run(cfg, ds);
  const bool needs_z = generator_input_kind(cfg.g_arch) == GenInput::Noise;

  for (std::int64_t it = 0; it < cfg.mm.iterations; ++it) {
    run.maybe_drop_lr(it, nullptr, &res.g_opt);
    auto b = batches.next();
    if (cfg.augment) b.x = augment(b.x, rng);

    Tensor<float> z;
    const Tensor<float>* zp = nullptr;
    if (needs_z) {
      z = Tensor<float>(Shape{b.x.dim(0), res.g->input_shape[0]});
      for (std::int64_t i = 0; i < z.size(); ++i)
        z[i] = static_cast<float>(rng.gaussian());
      zp = &z;
    }

    double adv_loss;
    try {
      adv_loss = static_cast<double>(generator_update(*res.g, res.d, b.x, b.labels,
                                                      cfg.mm, res.g_opt, {}, zp));
    } catch (const TrainingError& e) {
      throw TrainingError("iteration " + std::to_string(it) + ": " + e.what());
    }

    // Probe accuracy is the fixed model's accuracy under the current
    // generator, measured with a per-evaluation fixed noise seed.
    const bool want_acc =
        (it + 1) % cfg.acc_every == 0 || it + 1 == cfg.mm.iterations;
    const bool want_loss = (it + 1) % cfg.loss_every == 0;
    if (want_loss || want_acc) {
      MetricsRow row;
      row.iter = it + 1;
      row.adv_loss = adv_loss;
      if (want_acc) {
        Rng probe_rng(derive_seed(cfg.seed, "probe", std::to_string(it + 1)));
        Tensor<float> adv = generator_attack(*res.g, run.probe().images,
                                             &run.probe().labels, &probe_rng,
                                             cfg.mm.eps);
        row.accuracy = accuracy(res.d, adv, run.probe().labels);
      }
      res.metrics.rows.push_back(row);
    }
  }
  res.rng_state = rng.state();
  res.iterations = cfg.mm.iterations;
  return res;
}

}  // namespace advnet
