#include "hdas/ops_catalog.hpp"

#include <algorithm>
#include <cmath>

#include "hdas/error.hpp"

namespace hdas {

namespace {

constexpr std::array<std::string_view, kNumCellOps> kCellNames = {
    "sep_conv_3x3", "sep_conv_5x5", "dil_conv_3x3", "dil_conv_5x5",
    "avg_pool_3x3", "max_pool_3x3", "skip_connect", "none"};

constexpr std::array<std::string_view, kNumStageOps> kStageNames = {
    "avg_pool_3x3", "max_pool_3x3", "skip_connect", "none"};

class PoolBn final : public Module {
 public:
  PoolBn(ParamStore& store, const std::string& name, int channels, int stride, bool max)
      : bn_(store, name + ".bn", channels), stride_(stride), max_(max) {}
  Var forward(ForwardCtx& ctx, Var x) override {
    return bn_.forward(ctx, max_ ? max_pool3x3(x, stride_) : avg_pool3x3(x, stride_));
  }

 private:
  BatchNorm bn_;
  int stride_;
  bool max_;
};

class Identity final : public Module {
 public:
  Var forward(ForwardCtx&, Var x) override { return identity(x); }
};

}  // namespace

std::string_view op_name(CellOp op) { return kCellNames[static_cast<std::size_t>(op)]; }

std::string_view op_name(StageOp op) { return kStageNames[static_cast<std::size_t>(op)]; }

std::optional<CellOp> parse_cell_op(std::string_view name) {
  for (int i = 0; i < kNumCellOps; ++i) {
    if (kCellNames[static_cast<std::size_t>(i)] == name) return static_cast<CellOp>(i);
  }
  return std::nullopt;
}

std::optional<StageOp> parse_stage_op(std::string_view name) {
  for (int i = 0; i < kNumStageOps; ++i) {
    if (kStageNames[static_cast<std::size_t>(i)] == name) return static_cast<StageOp>(i);
  }
  return std::nullopt;
}

int none_index(int opset_size) {
  if (opset_size == kNumCellOps) return static_cast<int>(CellOp::kNone);
  if (opset_size == kNumStageOps) return static_cast<int>(StageOp::kNone);
  return -1;
}

std::unique_ptr<Module> make_cell_op(CellOp op, ParamStore& store, const std::string& name,
                                     int channels, int stride) {
  const std::string full = name + "." + std::string(op_name(op));
  switch (op) {
    case CellOp::kSepConv3x3:
      return std::make_unique<SepConv>(store, full, channels, 3, stride);
    case CellOp::kSepConv5x5:
      return std::make_unique<SepConv>(store, full, channels, 5, stride);
    case CellOp::kDilConv3x3:
      return std::make_unique<DilConv>(store, full, channels, 3, stride);
    case CellOp::kDilConv5x5:
      return std::make_unique<DilConv>(store, full, channels, 5, stride);
    case CellOp::kAvgPool3x3:
      return std::make_unique<PoolBn>(store, full, channels, stride, false);
    case CellOp::kMaxPool3x3:
      return std::make_unique<PoolBn>(store, full, channels, stride, true);
    case CellOp::kSkipConnect:
      if (stride == 1) return std::make_unique<Identity>();
      return std::make_unique<FactorizedReduce>(store, full, channels, channels);
    case CellOp::kNone:
      return nullptr;
  }
  return nullptr;
}

Var apply_stage_op(StageOp op, Var x) {
  switch (op) {
    case StageOp::kAvgPool3x3:
      return avg_pool3x3(x, 1);
    case StageOp::kMaxPool3x3:
      return max_pool3x3(x, 1);
    case StageOp::kSkipConnect:
      return identity(x);
    case StageOp::kNone:
      break;
  }
  fail(ErrorKind::kInvalidArgument, "apply_stage_op: none has no output");
}

Var mix_outputs(const std::vector<Var>& outputs, Var logits) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 1 || static_cast<std::size_t>(lv.dim(0)) != outputs.size()) {
    fail(ErrorKind::kShape, "mixed_op: " + std::to_string(outputs.size()) + " ops but logits " +
                                shape_str(lv.shape()));
  }
  Var weights = softmax(logits, 0);
  std::vector<Var> xs;
  std::vector<int> index;
  for (std::size_t o = 0; o < outputs.size(); ++o) {
    if (!outputs[o].valid()) continue;
    if (!xs.empty() && outputs[o].shape() != xs.front().shape()) {
      fail(ErrorKind::kShape, "mixed_op: op " + std::to_string(o) + " output " +
                                  shape_str(outputs[o].shape()) + " disagrees with " +
                                  shape_str(xs.front().shape()));
    }
    xs.push_back(outputs[o]);
    index.push_back(static_cast<int>(o));
  }
  if (xs.empty()) fail(ErrorKind::kInvalidArgument, "mixed_op: op set has no non-none member");
  return weighted_sum(xs, weights, index);
}

CellMixedOp::CellMixedOp(ParamStore& store, const std::string& name, int channels, int stride)
{
  for (int o = 0; o < kNumCellOps; ++o) {
    ops_[static_cast<std::size_t>(o)] =
        make_cell_op(static_cast<CellOp>(o), store, name, channels, stride);
  }
}

Var CellMixedOp::forward(ForwardCtx& ctx, Var x, Var logits) {
  std::vector<Var> outs(kNumCellOps);
  for (int o = 0; o < kNumCellOps; ++o) {
    if (ops_[static_cast<std::size_t>(o)]) {
      outs[static_cast<std::size_t>(o)] = ops_[static_cast<std::size_t>(o)]->forward(ctx, x);
    }
  }
  return mix_outputs(outs, logits);
}

Var stage_mixed_op(Var x, Var logits) {
  std::vector<Var> outs(kNumStageOps);
  for (int o = 0; o < kNumStageOps; ++o) {
    if (static_cast<StageOp>(o) != StageOp::kNone) {
      outs[static_cast<std::size_t>(o)] = apply_stage_op(static_cast<StageOp>(o), x);
    }
  }
  return mix_outputs(outs, logits);
}

std::vector<double> softmax_values(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

double edge_strength(std::span<const double> logits, bool has_none) {
  if (!has_none) return 1.0;
  const std::vector<double> p = softmax_values(logits);
  const int none = none_index(static_cast<int>(logits.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (static_cast<int>(i) != none) s += p[i];
  }
  return s;
}

Var edge_strength(Var logits, bool has_none) {
  Graph& g = logits.graph();
  if (!has_none) return g.constant(Tensor::scalar(1.0));
  const int n = logits.value().dim(0);
  const int none = none_index(n);
  if (none < 0) fail(ErrorKind::kShape, "edge_strength: op set of size " + std::to_string(n) + " has no none member");
  Var p = softmax(logits, 0);
  std::vector<Var> kept;
  for (int i = 0; i < n; ++i) {
    if (i != none) kept.push_back(select(p, i));
  }
  return add_n(kept);
}

}  // namespace hdas
