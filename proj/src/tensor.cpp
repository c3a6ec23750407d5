#include "hdas/tensor.hpp"

#include <malloc.h>

#include <cmath>

#include "hdas/error.hpp"

namespace hdas {

namespace {

// Graph tensors are allocated and freed at a high rate; keeping large blocks
// on the heap instead of fresh mmap pages avoids a page fault per tensor.
const bool kHeapTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();

}  // namespace

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) fail(ErrorKind::kShape, "non-positive dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_numel(shape_) != data_.size()) {
    fail(ErrorKind::kShape, "tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::uninitialized(Shape shape) {
  Tensor t;
  t.data_.resize(shape_numel(shape));
  t.shape_ = std::move(shape);
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    fail(ErrorKind::kShape, "item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::add_(const Tensor& other) {
  if (other.shape_ != shape_) {
    fail(ErrorKind::kShape, "add_: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
  }
  const double* src = other.data_.data();
  double* dst = data_.data();
  const std::size_t n = data_.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace hdas
