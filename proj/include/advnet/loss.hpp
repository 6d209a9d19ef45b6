#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "advnet/tensor.hpp"

namespace advnet {

template <typename T>
struct CrossEntropyResult {
  T loss = T(0);                 // mean over the batch
  Tensor<T> dlogits;             // (softmax - one-hot) / batch
  std::vector<T> per_sample;     // unaveraged per-sample losses
};

/// Mean softmax cross-entropy over a [batch x classes] logit matrix.
/// Log-sum-exp is max-shifted, so saturated logits stay finite.
template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                            const std::vector<int>& labels) {
  if (logits.ndim() != 2) {
    throw DimensionError("softmax_cross_entropy: logits must be [batch,classes], got " +
                         shape_str(logits.shape));
  }
  const int n = logits.dim(0);
  const int c = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(n));
  }

  CrossEntropyResult<T> out;
  out.dlogits = Tensor<T>(logits.shape);
  out.per_sample.resize(static_cast<std::size_t>(n));

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(y) +
                       " out of range [0," + std::to_string(c) + ") at sample " +
                       std::to_string(i));
    }
    const T* row = logits.ptr() + static_cast<std::int64_t>(i) * c;
    T* drow = out.dlogits.ptr() + static_cast<std::int64_t>(i) * c;

    T mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    const double logz = std::log(sum) + static_cast<double>(mx);

    const double li = logz - static_cast<double>(row[y]);
    out.per_sample[static_cast<std::size_t>(i)] = static_cast<T>(li);
    total += li;

    for (int j = 0; j < c; ++j) {
      double p = std::exp(static_cast<double>(row[j]) - logz);
      drow[j] = static_cast<T>((p - (j == y ? 1.0 : 0.0)) / n);
    }
  }
  out.loss = static_cast<T>(total / n);
  return out;
}

/// argmax with ties broken toward the lowest class index.
template <typename T>
int argmax_row(const T* row, int c) {
  int best = 0;
  for (int j = 1; j < c; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

template <typename T>
int argmin_row(const T* row, int c) {
  int best = 0;
  for (int j = 1; j < c; ++j) {
    if (row[j] < row[best]) best = j;
  }
  return best;
}

}  // namespace advnet
