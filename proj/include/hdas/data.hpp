#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hdas/tensor.hpp"

namespace hdas {

/// Labeled images stored as one [N, C, H, W] tensor.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int num_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
  int channels() const { return images.dim(1); }
  int height() const { return images.dim(2); }
  int width() const { return images.dim(3); }

  /// Stacks the listed samples into a batch.
  std::pair<Tensor, std::vector<int>> batch(const std::vector<int>& indices) const;
  Dataset subset(const std::vector<int>& indices) const;
};

struct ToyDataSpec {
  int size = 16;
  int train = 2048;
  int test = 512;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

/// Oriented-bar images: the class is the quarter of [0, pi) containing the
/// bar's angle. Angles keep a margin from the class boundaries.
std::pair<Dataset, Dataset> make_toy_dataset(const ToyDataSpec& spec);

/// Reads a CIFAR-10 binary batch: 3073-byte records (label, then R, G, B
/// planes of 32x32), scaled to [0, 1] and normalized per channel.
Dataset load_cifar10_batch(const std::string& path);
Dataset decode_cifar10(const std::vector<unsigned char>& bytes);

/// Deterministic split into a weight half and an architecture half whose
/// sizes differ by at most one (the weight half gets the extra sample).
std::pair<std::vector<int>, std::vector<int>> split_data(int n, std::uint64_t seed);

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<int> permutation(int n, std::uint64_t seed);

}  // namespace hdas
