#include "advnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <zlib.h>

#include <json.hpp>

#include "advnet/zoo.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload writer assumes a little-endian host");

namespace advnet {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'A', 'D', 'V', 'N', 'E', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

struct PayloadWriter {
  std::vector<float> data;

  json add(const std::string& name, const Tensor<float>& t) {
    json e;
    e["name"] = name;
    e["shape"] = t.shape;
    e["offset"] = data.size() * sizeof(float);
    data.insert(data.end(), t.data.begin(), t.data.end());
    return e;
  }
};

struct PayloadReader {
  const float* data;
  std::size_t count;  // in floats

  Tensor<float> get(const json& e) const {
    Shape shape = e.at("shape").get<Shape>();
    const std::size_t offset = e.at("offset").get<std::size_t>();
    if (offset % sizeof(float) != 0) throw FormatError("checkpoint: misaligned tensor offset");
    const std::size_t begin = offset / sizeof(float);
    const std::size_t n = static_cast<std::size_t>(shape_numel(shape));
    if (begin + n > count) {
      throw TruncationError("checkpoint: tensor '" +
                            e.value("name", std::string("?")) +
                            "' extends past the payload");
    }
    return Tensor<float>(std::move(shape),
                         std::vector<float>(data + begin, data + begin + n));
  }
};

json model_manifest(const ModelBlob& b, PayloadWriter& w) {
  json m;
  m["arch"] = b.arch;
  m["input_shape"] = b.input_shape;
  m["class_count"] = b.class_count;
  m["params"] = json::array();
  for (const auto& [name, t] : b.params) m["params"].push_back(w.add(name, t));
  m["state"] = json::array();
  for (const auto& [name, t] : b.state) m["state"].push_back(w.add(name, t));
  return m;
}

ModelBlob model_from_manifest(const json& m, const PayloadReader& r) {
  ModelBlob b;
  b.arch = m.at("arch").get<std::string>();
  b.input_shape = m.at("input_shape").get<Shape>();
  b.class_count = m.at("class_count").get<int>();
  for (const auto& e : m.at("params"))
    b.params.emplace_back(e.at("name").get<std::string>(), r.get(e));
  for (const auto& e : m.at("state"))
    b.state.emplace_back(e.at("name").get<std::string>(), r.get(e));
  return b;
}

json opt_manifest(const OptimizerBlob& b, PayloadWriter& w) {
  json m;
  m["rule"] = b.rule;
  m["lr"] = b.lr;
  m["momentum"] = b.momentum;
  m["beta1"] = b.beta1;
  m["beta2"] = b.beta2;
  m["weight_decay"] = b.weight_decay;
  m["steps"] = b.steps;
  m["buffers"] = json::array();
  for (std::size_t i = 0; i < b.buffers.size(); ++i)
    m["buffers"].push_back(w.add("buf" + std::to_string(i), b.buffers[i]));
  return m;
}

OptimizerBlob opt_from_manifest(const json& m, const PayloadReader& r) {
  OptimizerBlob b;
  b.rule = m.at("rule").get<std::string>();
  b.lr = m.at("lr").get<double>();
  b.momentum = m.at("momentum").get<double>();
  b.beta1 = m.at("beta1").get<double>();
  b.beta2 = m.at("beta2").get<double>();
  b.weight_decay = m.at("weight_decay").get<double>();
  b.steps = m.at("steps").get<std::int64_t>();
  for (const auto& e : m.at("buffers")) b.buffers.push_back(r.get(e));
  return b;
}

void append_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

void append_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), 8);
}

}  // namespace

ModelBlob ModelBlob::from(Model<float>& m) {
  ModelBlob b;
  b.arch = m.arch;
  b.input_shape = m.input_shape;
  b.class_count = m.class_count;
  for (auto* p : m.params()) b.params.emplace_back(p->name, p->value);
  for (auto& [name, t] : m.state()) b.state.emplace_back(name, *t);
  return b;
}

Model<float> ModelBlob::restore() const {
  Rng init_rng(0);  // initial values are overwritten below
  Model<float> m = build_network<float>(arch, init_rng);
  if (m.input_shape != input_shape || m.class_count != class_count) {
    throw ConfigError("checkpoint: stored geometry " + shape_str(input_shape) +
                      "/" + std::to_string(class_count) +
                      " does not match architecture " + arch);
  }
  auto live_params = m.params();
  if (live_params.size() != params.size()) {
    throw ConfigError("checkpoint: " + arch + " expects " +
                      std::to_string(live_params.size()) + " parameter tensors, found " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (live_params[i]->name != params[i].first ||
        live_params[i]->value.shape != params[i].second.shape) {
      throw ConfigError("checkpoint: parameter mismatch at '" + params[i].first +
                        "' for architecture " + arch);
    }
    live_params[i]->value = params[i].second;
  }
  auto live_state = m.state();
  if (live_state.size() != state.size()) {
    throw ConfigError("checkpoint: " + arch + " state entry count mismatch");
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (live_state[i].first != state[i].first ||
        live_state[i].second->shape != state[i].second.shape) {
      throw ConfigError("checkpoint: state mismatch at '" + state[i].first + "'");
    }
    *live_state[i].second = state[i].second;
  }
  return m;
}

OptimizerBlob OptimizerBlob::from(Optimizer<float>& opt) {
  OptimizerBlob b;
  b.lr = opt.lr();
  b.steps = opt.steps();
  if (opt.rule() == OptimizerRule::Adam) {
    auto& a = opt.as_adam();
    b.rule = "adam";
    b.beta1 = a.beta1();
    b.beta2 = a.beta2();
    b.weight_decay = a.weight_decay();
    b.buffers = a.first_moments();
    for (const auto& t : a.second_moments()) b.buffers.push_back(t);
  } else {
    auto& s = opt.as_sgd();
    b.rule = "sgd-momentum";
    b.momentum = s.momentum();
    b.weight_decay = s.weight_decay();
    b.buffers = s.buffers();
  }
  return b;
}

Optimizer<float> OptimizerBlob::restore() const {
  if (rule == "adam") {
    auto opt = Optimizer<float>::adam(static_cast<float>(lr), static_cast<float>(beta1),
                                      static_cast<float>(beta2),
                                      static_cast<float>(weight_decay));
    auto& a = opt.as_adam();
    if (buffers.size() % 2 != 0)
      throw FormatError("checkpoint: adam state needs an even buffer count");
    const std::size_t half = buffers.size() / 2;
    a.first_moments().assign(buffers.begin(),
                             buffers.begin() + static_cast<std::ptrdiff_t>(half));
    a.second_moments().assign(buffers.begin() + static_cast<std::ptrdiff_t>(half),
                              buffers.end());
    a.set_steps(steps);
    return opt;
  }
  if (rule == "sgd-momentum") {
    auto opt = Optimizer<float>::sgd(static_cast<float>(lr), static_cast<float>(momentum),
                                     static_cast<float>(weight_decay));
    auto& s = opt.as_sgd();
    s.buffers() = buffers;
    s.set_steps(steps);
    return opt;
  }
  throw FormatError("checkpoint: unknown optimizer rule '" + rule + "'");
}

void checkpoint_save(const Checkpoint& ckpt, const std::string& path) {
  if (!ckpt.d && !ckpt.g) throw ConfigError("checkpoint: nothing to save");

  PayloadWriter w;
  json manifest;
  manifest["models"] = json::array();
  if (ckpt.d) {
    json m = model_manifest(*ckpt.d, w);
    m["role"] = "d";
    manifest["models"].push_back(std::move(m));
  }
  if (ckpt.g) {
    json m = model_manifest(*ckpt.g, w);
    m["role"] = "g";
    manifest["models"].push_back(std::move(m));
  }
  manifest["optimizers"] = json::array();
  if (ckpt.d_opt) {
    json m = opt_manifest(*ckpt.d_opt, w);
    m["role"] = "d";
    manifest["optimizers"].push_back(std::move(m));
  }
  if (ckpt.g_opt) {
    json m = opt_manifest(*ckpt.g_opt, w);
    m["role"] = "g";
    manifest["optimizers"].push_back(std::move(m));
  }
  manifest["iteration"] = ckpt.iteration;
  manifest["rng_state"] = ckpt.rng_state;
  manifest["config"] = ckpt.config_echo;

  const std::string mjson = manifest.dump();
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  append_u32(out, kVersion);
  append_u64(out, mjson.size());
  out.append(mjson);
  append_u64(out, w.data.size() * sizeof(float));
  out.append(reinterpret_cast<const char*>(w.data.data()),
             w.data.size() * sizeof(float));
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(out.data()),
            static_cast<uInt>(out.size())));
  append_u32(out, crc);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(kMagic) + 4) {
    throw TruncationError(path + ": file too short for a checkpoint header");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path + ": bad magic, not a checkpoint file");
  }
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 8, 4);
  if (version != kVersion) {
    throw VersionError(path + ": unsupported checkpoint version " +
                       std::to_string(version));
  }

  if (bytes.size() < 16 + 4) throw TruncationError(path + ": truncated header");
  std::uint64_t mlen;
  std::memcpy(&mlen, bytes.data() + 12, 8);
  std::size_t pos = 20;
  if (pos + mlen + 8 + 4 > bytes.size()) {
    throw TruncationError(path + ": manifest extends past end of file");
  }
  const std::string mjson = bytes.substr(pos, mlen);
  pos += mlen;
  std::uint64_t plen;
  std::memcpy(&plen, bytes.data() + pos, 8);
  pos += 8;
  if (pos + plen + 4 > bytes.size()) {
    throw TruncationError(path + ": payload extends past end of file");
  }

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  const std::uint32_t computed = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size() - 4)));
  if (stored_crc != computed) {
    throw CrcError(path + ": CRC mismatch, file is corrupt");
  }

  json manifest;
  try {
    manifest = json::parse(mjson);
  } catch (const json::exception& e) {
    throw FormatError(path + ": manifest is not valid JSON (" + e.what() + ")");
  }

  PayloadReader r{reinterpret_cast<const float*>(bytes.data() + pos),
                  static_cast<std::size_t>(plen / sizeof(float))};
  Checkpoint ckpt;
  try {
    for (const auto& m : manifest.at("models")) {
      const std::string role = m.at("role").get<std::string>();
      if (role == "d") ckpt.d = model_from_manifest(m, r);
      else if (role == "g") ckpt.g = model_from_manifest(m, r);
      else throw FormatError(path + ": unknown model role '" + role + "'");
    }
    for (const auto& m : manifest.value("optimizers", json::array())) {
      const std::string role = m.at("role").get<std::string>();
      if (role == "d") ckpt.d_opt = opt_from_manifest(m, r);
      else if (role == "g") ckpt.g_opt = opt_from_manifest(m, r);
      else throw FormatError(path + ": unknown optimizer role '" + role + "'");
    }
    ckpt.iteration = manifest.value("iteration", std::int64_t(0));
    ckpt.rng_state = manifest.value("rng_state", std::string());
    if (manifest.contains("config")) {
      ckpt.config_echo =
          manifest["config"].get<std::map<std::string, std::string>>();
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": malformed manifest (" + std::string(e.what()) + ")");
  }
  return ckpt;
}

Model<float> restore_discriminator(const Checkpoint& ckpt) {
  if (!ckpt.d || ckpt.d->class_count <= 0 || ckpt.d->arch.rfind("D", 0) != 0) {
    throw ConfigError("checkpoint holds no classifier network (arch " +
                      (ckpt.d ? ckpt.d->arch : (ckpt.g ? ckpt.g->arch : "none")) + ")");
  }
  return ckpt.d->restore();
}

Model<float> restore_generator(const Checkpoint& ckpt) {
  if (!ckpt.g || ckpt.g->arch.rfind("G", 0) != 0) {
    throw ConfigError("checkpoint holds no generator network");
  }
  return ckpt.g->restore();
}

}  // namespace advnet
