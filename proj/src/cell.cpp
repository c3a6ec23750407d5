#include "hdas/cell.hpp"

#include <algorithm>

#include "hdas/error.hpp"

namespace hdas {

MixedCell::MixedCell(ParamStore& weights, const std::string& name, const CellSpec& spec,
                     int c_in0, int c_in1, int channels, Parameter& alpha)
    : spec_(spec),
      channels_(channels),
      alpha_(&alpha),
      pre0_(weights, name + ".pre0", c_in0, channels, 1, 1),
      pre1_(weights, name + ".pre1", c_in1, channels, 1, 1) {
  if (spec.n_intermediate < 1 || spec.multiplier < 1 || spec.multiplier > spec.n_intermediate) {
    fail(ErrorKind::kInvalidArgument, name + ": invalid cell spec");
  }
  if (alpha.value.shape() != Shape{spec.n_edges(), kNumCellOps}) {
    fail(ErrorKind::kShape, name + ": alpha table " + shape_str(alpha.value.shape()) + " expected [" +
                                std::to_string(spec.n_edges()) + "," + std::to_string(kNumCellOps) + "]");
  }
  for (int k = 0; k < spec.n_intermediate; ++k) {
    for (int j = 0; j < k + 2; ++j) {
      const int stride = spec.is_reduction && j < 2 ? 2 : 1;
      edges_.push_back(std::make_unique<CellMixedOp>(
          weights, name + ".edge" + std::to_string(cell_edge_index(k, j)), channels, stride));
    }
  }
}

Var MixedCell::forward(ForwardCtx& ctx, Var s0, Var s1) {
  if (s0.shape().size() != 4 || s1.shape().size() != 4) {
    fail(ErrorKind::kShape, "cell_forward: inputs must be rank 4");
  }
  Var alpha = ctx.bind(*alpha_);
  std::vector<Var> states{pre0_.forward(ctx, s0), pre1_.forward(ctx, s1)};
  if (states[0].shape() != states[1].shape()) {
    fail(ErrorKind::kShape, "cell_forward: preprocessed inputs " + shape_str(states[0].shape()) +
                                " vs " + shape_str(states[1].shape()));
  }
  for (int k = 0; k < spec_.n_intermediate; ++k) {
    std::vector<Var> terms;
    for (int j = 0; j < k + 2; ++j) {
      const int e = cell_edge_index(k, j);
      terms.push_back(edges_[static_cast<std::size_t>(e)]->forward(ctx, states[static_cast<std::size_t>(j)], row(alpha, e)));
    }
    states.push_back(add_n(terms));
  }
  std::vector<Var> out(states.end() - spec_.multiplier, states.end());
  return concat_channels(out);
}

DerivedCell::DerivedCell(ParamStore& weights, const std::string& name,
                         const CellGenotype& genotype, bool is_reduction, int c_in0, int c_in1,
                         int channels)
    : genotype_(genotype),
      channels_(channels),
      pre0_(weights, name + ".pre0", c_in0, channels, 1, 1),
      pre1_(weights, name + ".pre1", c_in1, channels, 1, 1) {
  const auto errors = validate_cell(genotype);
  if (!errors.empty()) fail(ErrorKind::kValidation, name + ": " + errors.front().message);
  for (int k = 0; k < genotype.n_intermediate(); ++k) {
    std::array<std::unique_ptr<Module>, 2> pair;
    for (int e = 0; e < 2; ++e) {
      const CellEdge& edge = genotype.nodes[static_cast<std::size_t>(k)][static_cast<std::size_t>(e)];
      const int stride = is_reduction && edge.pred < 2 ? 2 : 1;
      pair[static_cast<std::size_t>(e)] =
          make_cell_op(edge.op, weights,
                       name + ".node" + std::to_string(k) + ".in" + std::to_string(e), channels, stride);
    }
    ops_.push_back(std::move(pair));
  }
}

Var DerivedCell::forward(ForwardCtx& ctx, Var s0, Var s1) {
  std::vector<Var> states{pre0_.forward(ctx, s0), pre1_.forward(ctx, s1)};
  for (int k = 0; k < genotype_.n_intermediate(); ++k) {
    const auto& edges = genotype_.nodes[static_cast<std::size_t>(k)];
    Var a = ops_[static_cast<std::size_t>(k)][0]->forward(ctx, states[static_cast<std::size_t>(edges[0].pred)]);
    Var b = ops_[static_cast<std::size_t>(k)][1]->forward(ctx, states[static_cast<std::size_t>(edges[1].pred)]);
    states.push_back(add(a, b));
  }
  std::vector<Var> out;
  for (int idx : genotype_.concat) out.push_back(states[static_cast<std::size_t>(idx)]);
  return concat_channels(out);
}

CellGenotype derive_cell(const Tensor& alpha, int n_intermediate, int multiplier) {
  CellSpec spec{n_intermediate, multiplier, false};
  if (alpha.shape() != Shape{spec.n_edges(), kNumCellOps}) {
    fail(ErrorKind::kShape, "derive_cell: alpha " + shape_str(alpha.shape()));
  }
  CellGenotype g;
  const int none = static_cast<int>(CellOp::kNone);
  for (int k = 0; k < n_intermediate; ++k) {
    struct Candidate {
      double score;
      int pred;
      int op;
    };
    std::vector<Candidate> cands;
    for (int j = 0; j < k + 2; ++j) {
      const int e = cell_edge_index(k, j);
      const double* logits = alpha.ptr() + e * kNumCellOps;
      const auto w = softmax_values(std::span<const double>(logits, kNumCellOps));
      int best = -1;
      for (int o = 0; o < kNumCellOps; ++o) {
        if (o == none) continue;
        if (best < 0 || logits[o] > logits[best]) best = o;
      }
      cands.push_back({w[static_cast<std::size_t>(best)], j, best});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::array<CellEdge, 2> edges{CellEdge{cands[0].pred, static_cast<CellOp>(cands[0].op)},
                                  CellEdge{cands[1].pred, static_cast<CellOp>(cands[1].op)}};
    if (edges[0].pred > edges[1].pred) std::swap(edges[0], edges[1]);
    g.nodes.push_back(edges);
  }
  for (int i = 0; i < multiplier; ++i) g.concat.push_back(n_intermediate + 2 - multiplier + i);
  return g;
}

}  // namespace hdas
