#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advnet/rng.hpp"
#include "advnet/tensor.hpp"

namespace advnet {

/// Images in data scale [-1,1], NHWC; labels in [0, classes).
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;
  int classes = 10;
  std::string split;

  std::int64_t size() const { return images.ndim() ? images.dim(0) : 0; }
  void validate() const;
};

/// Parses a big-endian IDX image/label pair (the standard MNIST container)
/// and rescales pixels [0,255] -> [-1,1] via x/127.5 - 1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Inverse of load_idx; reproduces the original files byte-for-byte.
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path);

/// kind "two-gaussians": 8x8x1 images from two class-conditional Gaussians,
/// linearly separable at 3 sigma. kind "tiny-images": uniform [-1,1] images
/// with random labels.
Dataset make_synthetic(const std::string& kind, std::int64_t n, std::uint64_t seed);

/// Resolves "mnist", "mnist:split=test", "mnist:split=train:n=10000",
/// "synthetic:two-gaussians:n=512:seed=7". data_dir defaults to the
/// ADVNET_DATA_DIR environment variable.
Dataset load_dataset(const std::string& spec, std::string data_dir = "");

Dataset subset(const Dataset& ds, std::int64_t start, std::int64_t count);

/// Per-sample independent pad-with-(-1)-then-random-crop and 50% horizontal
/// flip. Shape is preserved.
Tensor<float> augment(const Tensor<float>& batch, Rng& rng, int pad = 4,
                      bool hflip = true);

/// Deterministic shuffled mini-batch stream; reshuffles every epoch.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, int batch_size, std::uint64_t seed);

  struct Batch {
    Tensor<float> x;
    std::vector<int> labels;
  };
  Batch next();

 private:
  void reshuffle();
  const Dataset& ds_;
  int batch_size_;
  Rng rng_;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace advnet
