#include "advnet/evalharness.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <zlib.h>

#include <json.hpp>

namespace advnet {

namespace {

using nlohmann::json;

constexpr int kEvalBatch = 256;

Tensor<float> slice_rows(const Tensor<float>& t, std::int64_t start, int count) {
  Shape s = t.shape;
  s[0] = count;
  const std::int64_t per = t.size() / t.dim(0);
  Tensor<float> out(s);
  std::memcpy(out.ptr(), t.ptr() + start * per,
              static_cast<std::size_t>(count * per) * sizeof(float));
  return out;
}

const std::vector<std::string>& attack_order() {
  static const std::vector<std::string> order = {"fgs", "pgd", "least-likely",
                                                 "generator"};
  return order;
}

}  // namespace

const EvalCell* EvalReport::find(const std::string& defense, const std::string& attack,
                                 const std::string& source) const {
  for (const auto& c : cells) {
    if (c.defense == defense && c.attack == attack && c.source == source) return &c;
  }
  return nullptr;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "defense,attack,source,accuracy,n\n";
  char buf[64];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof(buf), "%.9g", c.accuracy);
    os << c.defense << "," << c.attack << "," << c.source << "," << buf << ","
       << c.n << "\n";
  }
  return os.str();
}

std::string EvalReport::to_json() const {
  json j;
  j["eps"] = eps;
  j["seed"] = seed;
  j["bn_mode"] = bn_mode;
  j["dataset"] = dataset;
  j["cells"] = json::array();
  for (const auto& c : cells) {
    j["cells"].push_back({{"defense", c.defense},
                          {"attack", c.attack},
                          {"source", c.source},
                          {"accuracy", c.accuracy},
                          {"n", c.n}});
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("eval report: invalid JSON (") + e.what() + ")");
  }
  EvalReport rep;
  try {
    rep.eps = j.at("eps").get<double>();
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.bn_mode = j.at("bn_mode").get<std::string>();
    rep.dataset = j.at("dataset").get<std::string>();
    for (const auto& c : j.at("cells")) {
      EvalCell cell;
      cell.defense = c.at("defense").get<std::string>();
      cell.attack = c.at("attack").get<std::string>();
      cell.source = c.at("source").get<std::string>();
      cell.accuracy = c.at("accuracy").get<double>();
      cell.n = c.at("n").get<std::int64_t>();
      rep.cells.push_back(std::move(cell));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("eval report: malformed (") + e.what() + ")");
  }
  return rep;
}

std::string EvalReport::to_text_table() const {
  // Column keys: clean first, then white-box attacks (source == defense),
  // then transfer columns grouped by source model.
  std::vector<std::string> defenses;
  for (const auto& c : cells) {
    if (std::find(defenses.begin(), defenses.end(), c.defense) == defenses.end())
      defenses.push_back(c.defense);
  }

  struct Col {
    std::string header;
    std::string attack;
    std::string source;  // empty means "the row's own defense"
  };
  std::vector<Col> cols;
  cols.push_back({"No Noise", "none", "-"});
  for (const auto& a : attack_order()) {
    for (const auto& c : cells) {
      if (c.attack == a && c.source == c.defense) {
        std::string h = a;
        std::transform(h.begin(), h.end(), h.begin(), ::toupper);
        cols.push_back({h, a, ""});
        break;
      }
    }
  }
  std::vector<std::string> sources;
  for (const auto& c : cells) {
    if (c.source != "-" && c.source != c.defense &&
        std::find(sources.begin(), sources.end(), c.source) == sources.end())
      sources.push_back(c.source);
  }
  for (const auto& s : sources) {
    for (const auto& a : attack_order()) {
      if (std::any_of(cells.begin(), cells.end(), [&](const EvalCell& c) {
            return c.attack == a && c.source == s && c.source != c.defense;
          })) {
        std::string h = a;
        std::transform(h.begin(), h.end(), h.begin(), ::toupper);
        cols.push_back({h + "(" + s + ")", a, s});
      }
    }
  }

  std::size_t name_w = 5;
  for (const auto& d : defenses) name_w = std::max(name_w, d.size());
  std::ostringstream os;
  os << std::string(name_w, ' ');
  std::vector<std::size_t> widths;
  for (const auto& col : cols) {
    const std::size_t w = std::max<std::size_t>(col.header.size(), 7) + 2;
    widths.push_back(w);
    os << std::string(w - col.header.size(), ' ') << col.header;
  }
  os << "\n";
  char buf[32];
  for (const auto& d : defenses) {
    os << d << std::string(name_w - d.size(), ' ');
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const std::string src = cols[i].source.empty() ? d : cols[i].source;
      const EvalCell* c = find(d, cols[i].attack, src);
      std::string cell = "-";
      if (c) {
        std::snprintf(buf, sizeof(buf), "%.2f%%", c->accuracy * 100.0);
        cell = buf;
      }
      os << std::string(widths[i] - cell.size(), ' ') << cell;
    }
    os << "\n";
  }
  return os.str();
}

double accuracy(const Model<float>& model, const Tensor<float>& images,
                const std::vector<int>& labels, int batch_size) {
  if (static_cast<std::int64_t>(labels.size()) != images.dim(0)) {
    throw DimensionError("accuracy: " + std::to_string(images.dim(0)) +
                         " images vs " + std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= model.class_count) {
      throw ConfigError("accuracy: label " + std::to_string(y) +
                        " outside the model's " +
                        std::to_string(model.class_count) + " classes");
    }
  }
  Model<float> m = model.clone();
  m.mode = Mode::Eval;
  m.bn_update = false;

  const std::int64_t n = images.dim(0);
  std::int64_t correct = 0;
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const int count = static_cast<int>(std::min<std::int64_t>(batch_size, n - start));
    Tensor<float> logits = m.forward(slice_rows(images, start, count));
    const int c = logits.dim(1);
    for (int i = 0; i < count; ++i) {
      const int pred = argmax_row(logits.ptr() + static_cast<std::int64_t>(i) * c, c);
      if (pred == labels[static_cast<std::size_t>(start + i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double accuracy(const Model<float>& model, const Dataset& ds, int batch_size) {
  return accuracy(model, ds.images, ds.labels, batch_size);
}

AdversarialSet materialize_attack(const EvalEntry& source, const Dataset& ds,
                                  const AttackSpec& spec, std::uint64_t base_seed) {
  if (!source.model) throw ConfigError("materialize_attack: missing source model");
  if (spec.family == AttackFamily::Generator && !source.generator) {
    throw ConfigError("materialize_attack: generator attack for '" + source.id +
                      "' but no generator checkpoint");
  }
  Model<float> m = source.model->clone();
  m.mode = Mode::Eval;  // attacks target the deployed model
  m.bn_update = false;

  Rng rng(derive_seed(base_seed, source.id, attack_family_name(spec.family)));
  AdversarialSet set;
  set.attack = attack_family_name(spec.family);
  set.source = source.id;
  set.eps = spec.eps;
  set.images = Tensor<float>(ds.images.shape);
  set.labels = ds.labels;

  const std::int64_t n = ds.size();
  const std::int64_t per = ds.images.size() / n;
  for (std::int64_t start = 0; start < n; start += kEvalBatch) {
    const int count = static_cast<int>(std::min<std::int64_t>(kEvalBatch, n - start));
    Tensor<float> x = slice_rows(ds.images, start, count);
    std::vector<int> labels(ds.labels.begin() + start,
                            ds.labels.begin() + start + count);
    Tensor<float> adv = run_attack(m, source.generator, x, labels, spec, rng);
    std::memcpy(set.images.ptr() + start * per, adv.ptr(),
                static_cast<std::size_t>(adv.size()) * sizeof(float));
  }
  return set;
}

namespace {

constexpr char kSetMagic[8] = {'A', 'D', 'V', 'S', 'E', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "adversarial set writer assumes a little-endian host");

}  // namespace

void save_adversarial_set(const AdversarialSet& set, const std::string& path) {
  json manifest;
  manifest["attack"] = set.attack;
  manifest["source"] = set.source;
  manifest["eps"] = set.eps;
  manifest["shape"] = set.images.shape;
  manifest["labels"] = set.labels;
  const std::string mjson = manifest.dump();

  std::string out;
  out.append(kSetMagic, sizeof(kSetMagic));
  const std::uint64_t mlen = mjson.size();
  out.append(reinterpret_cast<const char*>(&mlen), 8);
  out.append(mjson);
  out.append(reinterpret_cast<const char*>(set.images.ptr()),
             static_cast<std::size_t>(set.images.size()) * sizeof(float));
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(out.data()),
            static_cast<uInt>(out.size())));
  out.append(reinterpret_cast<const char*>(&crc), 4);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path);
}

AdversarialSet load_adversarial_set(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 20) throw TruncationError(path + ": too short");
  if (std::memcmp(bytes.data(), kSetMagic, sizeof(kSetMagic)) != 0) {
    throw FormatError(path + ": bad magic, not an adversarial set");
  }
  std::uint64_t mlen;
  std::memcpy(&mlen, bytes.data() + 8, 8);
  if (16 + mlen + 4 > bytes.size()) {
    throw TruncationError(path + ": manifest extends past end of file");
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  const std::uint32_t computed = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size() - 4)));
  if (stored_crc != computed) throw CrcError(path + ": CRC mismatch");

  json manifest;
  try {
    manifest = json::parse(bytes.substr(16, mlen));
  } catch (const json::exception& e) {
    throw FormatError(path + ": manifest is not valid JSON (" + e.what() + ")");
  }
  AdversarialSet set;
  try {
    set.attack = manifest.at("attack").get<std::string>();
    set.source = manifest.at("source").get<std::string>();
    set.eps = manifest.at("eps").get<double>();
    Shape shape = manifest.at("shape").get<Shape>();
    set.labels = manifest.at("labels").get<std::vector<int>>();
    const std::size_t want = static_cast<std::size_t>(shape_numel(shape)) * sizeof(float);
    if (16 + mlen + want + 4 != bytes.size()) {
      throw TruncationError(path + ": payload size does not match the manifest shape");
    }
    std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
    std::memcpy(data.data(), bytes.data() + 16 + mlen, want);
    set.images = Tensor<float>(std::move(shape), std::move(data));
  } catch (const json::exception& e) {
    throw FormatError(path + ": malformed manifest (" + std::string(e.what()) + ")");
  }
  return set;
}

EvalReport white_box_eval(const std::vector<EvalEntry>& models, const Dataset& ds,
                          const std::vector<AttackSpec>& attacks, std::uint64_t seed) {
  EvalReport rep;
  rep.eps = attacks.empty() ? 0.0 : attacks.front().eps;
  rep.seed = seed;
  rep.dataset = ds.split;
  for (const auto& entry : models) {
    if (!entry.model) throw ConfigError("white_box_eval: missing model '" + entry.id + "'");
    rep.cells.push_back(
        {entry.id, "none", "-", accuracy(*entry.model, ds), ds.size()});
    for (const auto& spec : attacks) {
      AdversarialSet set = materialize_attack(entry, ds, spec, seed);
      rep.cells.push_back({entry.id, set.attack, entry.id,
                           accuracy(*entry.model, set.images, set.labels),
                           ds.size()});
    }
  }
  return rep;
}

EvalReport black_box_transfer(const std::vector<EvalEntry>& defenses,
                              const std::vector<EvalEntry>& surrogates,
                              const Dataset& ds,
                              const std::vector<AttackSpec>& attacks,
                              std::uint64_t seed) {
  for (const auto& s : surrogates) {
    if (!s.model) throw ConfigError("black_box_transfer: missing surrogate '" + s.id + "'");
  }
  // One adversarial set per (surrogate, attack); every defense reuses it.
  std::vector<AdversarialSet> sets;
  for (const auto& s : surrogates) {
    for (const auto& spec : attacks) sets.push_back(materialize_attack(s, ds, spec, seed));
  }

  EvalReport rep;
  rep.eps = attacks.empty() ? 0.0 : attacks.front().eps;
  rep.seed = seed;
  rep.dataset = ds.split;
  for (const auto& d : defenses) {
    if (!d.model) throw ConfigError("black_box_transfer: missing defense '" + d.id + "'");
    rep.cells.push_back({d.id, "none", "-", accuracy(*d.model, ds), ds.size()});
    for (const auto& set : sets) {
      rep.cells.push_back({d.id, set.attack, set.source,
                           accuracy(*d.model, set.images, set.labels), ds.size()});
    }
  }
  return rep;
}

}  // namespace advnet
