#include "hdas/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "hdas/error.hpp"
#include "hdas/nn.hpp"

namespace hdas {

std::pair<Tensor, std::vector<int>> Dataset::batch(const std::vector<int>& indices) const {
  const std::size_t per = images.size() / static_cast<std::size_t>(size());
  Tensor out({static_cast<int>(indices.size()), channels(), height(), width()});
  std::vector<int> y;
  y.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int i = indices[k];
    if (i < 0 || i >= size()) fail(ErrorKind::kInvalidArgument, "batch: index out of range");
    std::copy_n(images.ptr() + static_cast<std::size_t>(i) * per, per, out.ptr() + k * per);
    y.push_back(labels[static_cast<std::size_t>(i)]);
  }
  return {std::move(out), std::move(y)};
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  auto [x, y] = batch(indices);
  return {std::move(x), std::move(y), num_classes};
}

namespace {

constexpr int kToyClasses = 4;

void render_bar(Rng& rng, int size, double noise, int label, double* img) {
  const double bin = std::numbers::pi / kToyClasses;
  const double theta = (label + 0.1 + 0.8 * rng.uniform()) * bin;
  const double cx = (size - 1) / 2.0 + (rng.uniform() - 0.5) * 4.0;
  const double cy = (size - 1) / 2.0 + (rng.uniform() - 0.5) * 4.0;
  const double half_len = size * (0.3 + 0.1 * rng.uniform());
  const double dx = std::cos(theta), dy = -std::sin(theta);
  double color[3];
  for (double& c : color) c = 0.5 + 0.5 * rng.uniform();
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double px = c - cx, py = r - cy;
      const double along = std::clamp(px * dx + py * dy, -half_len, half_len);
      const double ex = px - along * dx, ey = py - along * dy;
      const double v = std::exp(-(ex * ex + ey * ey) / (2.0 * 0.8 * 0.8));
      for (int ch = 0; ch < 3; ++ch) {
        img[ch * plane + static_cast<std::size_t>(r) * size + c] = v * color[ch];
      }
    }
  }
  for (std::size_t i = 0; i < 3 * plane; ++i) img[i] += noise * rng.normal();
}

Dataset make_split(int n, int size, double noise, Rng& rng) {
  Dataset d;
  d.num_classes = kToyClasses;
  d.images = Tensor({std::max(n, 1), 3, size, size});
  for (int i = 0; i < n; ++i) {
    const int label = rng.uniform_int(kToyClasses);
    render_bar(rng, size, noise, label, d.images.ptr() + static_cast<std::size_t>(i) * 3 * size * size);
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace

std::pair<Dataset, Dataset> make_toy_dataset(const ToyDataSpec& spec) {
  if (spec.size < 4 || spec.train < 1 || spec.test < 1 || spec.noise < 0.0) {
    fail(ErrorKind::kInvalidArgument, "toy dataset: invalid size, counts or noise");
  }
  Rng train_rng(mix_seed(spec.seed, "toy.train"));
  Rng test_rng(mix_seed(spec.seed, "toy.test"));
  return {make_split(spec.train, spec.size, spec.noise, train_rng),
          make_split(spec.test, spec.size, spec.noise, test_rng)};
}

Dataset decode_cifar10(const std::vector<unsigned char>& bytes) {
  constexpr std::size_t kRecord = 3073;
  constexpr int kSide = 32;
  constexpr double kMean[3] = {0.4914, 0.4822, 0.4465};
  constexpr double kStd[3] = {0.2470, 0.2435, 0.2616};
  if (bytes.size() % kRecord != 0) {
    fail(ErrorKind::kIo, "cifar10: length " + std::to_string(bytes.size()) +
                             " is not a multiple of 3073 bytes");
  }
  const int n = static_cast<int>(bytes.size() / kRecord);
  Dataset d;
  d.num_classes = 10;
  if (n == 0) return d;
  d.images = Tensor({n, 3, kSide, kSide});
  const std::size_t plane = kSide * kSide;
  for (int i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + static_cast<std::size_t>(i) * kRecord;
    if (rec[0] > 9) {
      fail(ErrorKind::kValidation, "cifar10: record " + std::to_string(i) + " has label " +
                                       std::to_string(rec[0]) + " outside [0, 9]");
    }
    d.labels.push_back(rec[0]);
    double* img = d.images.ptr() + static_cast<std::size_t>(i) * 3 * plane;
    for (int ch = 0; ch < 3; ++ch) {
      for (std::size_t p = 0; p < plane; ++p) {
        img[ch * plane + p] = (rec[1 + ch * plane + p] / 255.0 - kMean[ch]) / kStd[ch];
      }
    }
  }
  return d;
}

Dataset load_cifar10_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cifar10: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_cifar10(bytes);
}

std::vector<int> permutation(int n, std::uint64_t seed) {
  std::vector<int> p(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
  return p;
}

std::pair<std::vector<int>, std::vector<int>> split_data(int n, std::uint64_t seed) {
  if (n < 2) fail(ErrorKind::kInvalidArgument, "split_data: need at least 2 samples, got " + std::to_string(n));
  std::vector<int> p = permutation(n, mix_seed(seed, "split"));
  const auto mid = p.begin() + (n + 1) / 2;
  std::vector<int> weight_half(p.begin(), mid), arch_half(mid, p.end());
  std::sort(weight_half.begin(), weight_half.end());
  std::sort(arch_half.begin(), arch_half.end());
  return {std::move(weight_half), std::move(arch_half)};
}

}  // namespace hdas
