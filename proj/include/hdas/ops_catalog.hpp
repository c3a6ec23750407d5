#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hdas/nn.hpp"

namespace hdas {

/// Cell-level candidate operations, in canonical index order.
enum class CellOp {
  kSepConv3x3 = 0,
  kSepConv5x5,
  kDilConv3x3,
  kDilConv5x5,
  kAvgPool3x3,
  kMaxPool3x3,
  kSkipConnect,
  kNone,
};
inline constexpr int kNumCellOps = 8;

/// Stage-level candidate operations. None of them has parameters.
enum class StageOp {
  kAvgPool3x3 = 0,
  kMaxPool3x3,
  kSkipConnect,
  kNone,
};
inline constexpr int kNumStageOps = 4;

std::string_view op_name(CellOp op);
std::string_view op_name(StageOp op);
std::optional<CellOp> parse_cell_op(std::string_view name);
std::optional<StageOp> parse_stage_op(std::string_view name);

/// Index of the `none` member of an op set of the given size, or -1.
int none_index(int opset_size);

/// Builds the module for a cell operation. On stride-2 edges pooling uses
/// stride 2 and skip_connect becomes a factorized reduction. Cell pooling is
/// followed by BN. Returns nullptr for kNone.
std::unique_ptr<Module> make_cell_op(CellOp op, ParamStore& store, const std::string& name,
                                     int channels, int stride);

/// Applies a parameter-free stage op (stride 1). Must not be called with kNone.
Var apply_stage_op(StageOp op, Var x);

/// sum_o softmax(logits)_o * outputs[o]; `outputs[o]` is empty (invalid) for
/// the none op, which contributes zero. Throws on output-shape disagreement.
Var mix_outputs(const std::vector<Var>& outputs, Var logits);

/// Mixed operation of one cell edge: owns every candidate op module.
class CellMixedOp {
 public:
  CellMixedOp(ParamStore& store, const std::string& name, int channels, int stride);
  Var forward(ForwardCtx& ctx, Var x, Var logits);

 private:
  std::array<std::unique_ptr<Module>, kNumCellOps> ops_;
};

/// Mixed stage-level operation (parameter-free).
Var stage_mixed_op(Var x, Var logits);

/// Total non-none softmax mass; 1 when the op set has no none member.
double edge_strength(std::span<const double> logits, bool has_none);
/// Differentiable edge strength over a rank-1 logits Var.
Var edge_strength(Var logits, bool has_none);

/// Softmax of a plain vector (max-shifted).
std::vector<double> softmax_values(std::span<const double> logits);

}  // namespace hdas
