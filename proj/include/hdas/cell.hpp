#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hdas/genotype.hpp"
#include "hdas/nn.hpp"

namespace hdas {

struct CellSpec {
  int n_intermediate = 4;
  int multiplier = 4;
  bool is_reduction = false;

  /// sum_{k=0}^{n-1} (k + 2): every earlier node feeds every intermediate node.
  int n_edges() const { return n_intermediate * (n_intermediate + 3) / 2; }
};

/// Row of the alpha table for edge (pred -> intermediate node `node`).
inline int cell_edge_index(int node, int pred) { return node * (node + 3) / 2 + pred; }

/// A cell evaluable inside a network: consumes two inputs, emits
/// multiplier * C channels.
class CellModule {
 public:
  virtual ~CellModule() = default;
  virtual Var forward(ForwardCtx& ctx, Var s0, Var s1) = 0;
  virtual int out_channels() const = 0;
};

/// Continuous relaxation of a cell: every edge is a CellMixedOp weighted by
/// a row of `alpha` ([n_edges, 8]), which may be shared between cells.
class MixedCell final : public CellModule {
 public:
  MixedCell(ParamStore& weights, const std::string& name, const CellSpec& spec, int c_in0,
            int c_in1, int channels, Parameter& alpha);
  Var forward(ForwardCtx& ctx, Var s0, Var s1) override;
  int out_channels() const override { return spec_.multiplier * channels_; }

 private:
  CellSpec spec_;
  int channels_;
  Parameter* alpha_;
  ReluConvBn pre0_, pre1_;
  std::vector<std::unique_ptr<CellMixedOp>> edges_;
};

/// Discrete cell built from a CellGenotype.
class DerivedCell final : public CellModule {
 public:
  DerivedCell(ParamStore& weights, const std::string& name, const CellGenotype& genotype,
              bool is_reduction, int c_in0, int c_in1, int channels);
  Var forward(ForwardCtx& ctx, Var s0, Var s1) override;
  int out_channels() const override { return genotype_.multiplier() * channels_; }

 private:
  CellGenotype genotype_;
  int channels_;
  ReluConvBn pre0_, pre1_;
  std::vector<std::array<std::unique_ptr<Module>, 2>> ops_;
};

/// Per node, keeps the two incoming edges with the largest non-none softmax
/// weight and the argmax non-none op on each. Ties go to the lower
/// predecessor, then the lower op index. Edges are listed by predecessor.
CellGenotype derive_cell(const Tensor& alpha, int n_intermediate, int multiplier);

}  // namespace hdas
