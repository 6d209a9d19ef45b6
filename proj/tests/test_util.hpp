#pragma once

#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "advnet/model.hpp"
#include "advnet/rng.hpp"

namespace testutil {

using namespace advnet;

/// Scalar logistic line: maps x to logits [x, 0].
inline Model<float> logistic_line() {
  Rng rng(0);
  Model<float> m;
  m.input_shape = {1};
  m.class_count = 2;
  auto fc = std::make_unique<FullyConnected<float>>("fc", 1, 2, rng);
  fc->weights().value[0] = 1.0f;
  fc->weights().value[1] = 0.0f;
  fc->bias().value[0] = 0.0f;
  fc->bias().value[1] = 0.0f;
  m.add(std::move(fc));
  return m;
}

/// Small conv classifier for 8x8x1 inputs.
inline Model<float> tiny_conv(Rng& rng, int classes = 10) {
  Model<float> m;
  m.input_shape = {8, 8, 1};
  m.class_count = classes;
  m.add(std::make_unique<Conv2d<float>>("c1", 1, 3, 1, 4, rng));
  m.add(std::make_unique<Relu<float>>());
  m.add(std::make_unique<MaxPool<float>>(2));
  m.add(std::make_unique<FullyConnected<float>>("fc", 4 * 4 * 4, classes, rng));
  return m;
}

inline Tensor<float> random_images(Rng& rng, int n, int h, int w, int c) {
  Tensor<float> t(Shape{n, h, w, c});
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

inline std::vector<int> random_labels(Rng& rng, int n, int classes) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = static_cast<int>(rng.uniform_int(0, classes - 1));
  return y;
}

inline bool mnist_available() { return std::getenv("ADVNET_DATA_DIR") != nullptr; }

inline std::string tmp_path(const std::string& name) {
  const char* dir = std::getenv("TMPDIR");
  return std::string(dir ? dir : "/tmp") + "/" + name;
}

}  // namespace testutil
