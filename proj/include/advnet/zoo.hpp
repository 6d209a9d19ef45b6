#pragma once

#include <string>

#include "advnet/model.hpp"

namespace advnet {

/// Parsed architecture id, e.g. "D1", "G1:k=8", "D2:width=8:classes=100".
struct ArchSpec {
  std::string id;        // D1, D2, G0, G1, G2, G3
  int k = 64;            // generator width factor (16 by default for G3)
  int width = 16;        // D2 stem width
  int classes = 10;
  int channels = -1;     // input channels; default 1 for D1/G0, 3 otherwise
  int image = -1;        // input spatial extent; default 28 for D1/G0, 32 otherwise

  bool is_generator() const { return id.size() == 2 && id[0] == 'G'; }

  std::string to_string() const {
    std::string s = id;
    if (is_generator() && k != default_k()) s += ":k=" + std::to_string(k);
    if (id == "D2" && width != 16) s += ":width=" + std::to_string(width);
    if (!is_generator() && classes != 10) s += ":classes=" + std::to_string(classes);
    if (channels != default_channels()) s += ":c=" + std::to_string(channels);
    return s;
  }

  int default_k() const { return id == "G3" ? 16 : 64; }
  int default_channels() const { return (id == "D1" || id == "G0") ? 1 : 3; }
  int default_image() const { return (id == "D1" || id == "G0") ? 28 : 32; }
};

inline ArchSpec parse_arch(const std::string& s) {
  ArchSpec a;
  std::size_t pos = s.find(':');
  a.id = s.substr(0, pos);
  static const char* known[] = {"D1", "D2", "G0", "G1", "G2", "G3"};
  bool ok = false;
  for (const char* kid : known) ok = ok || a.id == kid;
  if (!ok) throw ConfigError("unknown architecture id '" + a.id + "'");
  a.k = a.default_k();
  while (pos != std::string::npos) {
    std::size_t next = s.find(':', pos + 1);
    std::string kv = s.substr(pos + 1, next == std::string::npos ? next : next - pos - 1);
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("bad architecture option '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const int val = std::stoi(kv.substr(eq + 1));
    if (key == "k") a.k = val;
    else if (key == "width") a.width = val;
    else if (key == "classes") a.classes = val;
    else if (key == "c") a.channels = val;
    else if (key == "image") a.image = val;
    else throw ConfigError("unknown architecture option '" + key + "'");
    pos = next;
  }
  if (a.channels < 0) a.channels = a.default_channels();
  if (a.image < 0) a.image = a.default_image();
  return a;
}

/// Builds the paper's networks. Generators end in tanh, so their outputs lie
/// in (-1, 1) elementwise for any input and parameters.
template <typename T>
Model<T> build_network(const ArchSpec& a, Rng& rng) {
  Model<T> m;
  m.arch = a.to_string();
  const int c = a.channels;

  if (a.id == "D1") {
    if (a.image != 28) throw ConfigError("D1 expects 28x28 inputs");
    m.input_shape = {28, 28, c};
    m.class_count = a.classes;
    m.add(std::make_unique<Conv2d<T>>("conv1", c, 5, 1, 32, rng));
    m.add(std::make_unique<MaxPool<T>>(2));
    m.add(std::make_unique<Conv2d<T>>("conv2", 32, 5, 1, 64, rng));
    m.add(std::make_unique<MaxPool<T>>(2));
    m.add(std::make_unique<FullyConnected<T>>("fc", 7 * 7 * 64, a.classes, rng));
  } else if (a.id == "D2") {
    if (a.image != 32) throw ConfigError("D2 expects 32x32 inputs");
    const int w = a.width;
    m.input_shape = {32, 32, c};
    m.class_count = a.classes;
    m.add(std::make_unique<Conv2d<T>>("stem", c, 3, 1, w, rng));
    int in = w;
    int idx = 0;
    auto block = [&](int s, int k) {
      m.add(std::make_unique<ResidualBlock<T>>("block" + std::to_string(idx++), in, 3,
                                               s, k, rng));
      in = k;
    };
    for (int i = 0; i < 3; ++i) block(1, w);
    block(2, 2 * w);
    for (int i = 0; i < 2; ++i) block(1, 2 * w);
    block(2, 4 * w);
    for (int i = 0; i < 2; ++i) block(1, 4 * w);
    m.add(std::make_unique<AvgPool<T>>(8));
    m.add(std::make_unique<FullyConnected<T>>("fc", 4 * w, a.classes, rng));
  } else if (a.id == "G0") {
    if (a.image != 28) throw ConfigError("G0 expects 28x28 inputs");
    m.input_shape = {28, 28, c};
    m.add(std::make_unique<Conv2d<T>>("conv1", c, 5, 2, 64, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn1", 64));
    m.add(std::make_unique<Relu<T>>());
    m.add(std::make_unique<Conv2d<T>>("conv2", 64, 5, 2, 128, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn2", 128));
    m.add(std::make_unique<Relu<T>>());
    m.add(std::make_unique<Deconv2d<T>>("deconv1", 128, 5, 2, 64, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn3", 64));
    m.add(std::make_unique<Relu<T>>());
    // Final stage is deconv -> tanh; a trailing BN-ReLU would clamp the noise
    // to nonnegative values and break the signed output range.
    m.add(std::make_unique<Deconv2d<T>>("deconv2", 64, 5, 2, c, rng));
    m.add(std::make_unique<TanhLayer<T>>());
  } else if (a.id == "G1") {
    if (a.image != 32) throw ConfigError("G1 expects 32x32 inputs");
    const int k = a.k;
    m.input_shape = {32, 32, c};
    m.add(std::make_unique<Conv2d<T>>("conv1", c, 3, 1, k, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn1", k));
    m.add(std::make_unique<Relu<T>>());
    m.add(std::make_unique<Conv2d<T>>("conv2", k, 3, 2, k, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn2", k));
    m.add(std::make_unique<Relu<T>>());
    m.add(std::make_unique<Conv2d<T>>("conv3", k, 3, 2, 2 * k, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn3", 2 * k));
    m.add(std::make_unique<Relu<T>>());
    int in = 2 * k;
    for (int i = 0; i < 6; ++i) {
      m.add(std::make_unique<ResidualBlock<T>>("block" + std::to_string(i), in, 3, 1,
                                               4 * k, rng));
      in = 4 * k;
    }
    m.add(std::make_unique<Deconv2d<T>>("deconv1", 4 * k, 3, 2, 2 * k, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn4", 2 * k));
    m.add(std::make_unique<Relu<T>>());
    m.add(std::make_unique<Deconv2d<T>>("deconv2", 2 * k, 3, 2, k, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn5", k));
    m.add(std::make_unique<Relu<T>>());
    m.add(std::make_unique<Conv2d<T>>("conv4", k, 3, 1, c, rng));
    m.add(std::make_unique<TanhLayer<T>>());
  } else if (a.id == "G2" || a.id == "G3") {
    const int k = a.k;
    if (a.id == "G2") {
      m.input_shape = {256 * k};
    } else {
      m.input_shape = {a.classes};
      m.add(std::make_unique<FullyConnected<T>>("fc", a.classes, 256 * k, rng));
    }
    m.add(std::make_unique<Reshape<T>>(Shape{8, 8, 4 * k}));
    for (int i = 0; i < 6; ++i) {
      m.add(std::make_unique<ResidualBlock<T>>("block" + std::to_string(i), 4 * k, 3,
                                               1, 4 * k, rng));
    }
    m.add(std::make_unique<Deconv2d<T>>("deconv1", 4 * k, 3, 2, 2 * k, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn1", 2 * k));
    m.add(std::make_unique<Relu<T>>());
    m.add(std::make_unique<Deconv2d<T>>("deconv2", 2 * k, 3, 2, k, rng));
    m.add(std::make_unique<BatchNorm<T>>("bn2", k));
    m.add(std::make_unique<Relu<T>>());
    m.add(std::make_unique<Conv2d<T>>("conv1", k, 3, 1, c, rng));
    m.add(std::make_unique<TanhLayer<T>>());
  }
  return m;
}

template <typename T>
Model<T> build_network(const std::string& arch, Rng& rng) {
  return build_network<T>(parse_arch(arch), rng);
}

/// What a generator consumes: the image, a Gaussian vector, or a one-hot label.
enum class GenInput { Image, Noise, Label };

inline GenInput generator_input_kind(const std::string& arch) {
  const std::string id = parse_arch(arch).id;
  if (id == "G0" || id == "G1") return GenInput::Image;
  if (id == "G2") return GenInput::Noise;
  if (id == "G3") return GenInput::Label;
  throw ConfigError("'" + arch + "' is not a generator architecture");
}

}  // namespace advnet
