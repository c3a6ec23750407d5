#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "hdas/cell.hpp"
#include "hdas/stage.hpp"

namespace hdas {

enum class CellSource {
  kSearchStageSpecific,  // 3 normal + 2 reduction alpha tables
  kSearchShared,         // 1 normal + 1 reduction alpha table
  kGenotype,             // discrete cells
};

enum class StageSource {
  kChain,
  kSupernet,      // fixed-count stage DAG
  kDistribution,  // stage DAG with beta-weighted output pairs
  kGenotype,
};

/// Everything that determines the network's structure.
struct NetworkSpec {
  int init_channels = 8;
  int num_classes = 4;
  int in_channels = 3;
  int n_intermediate = 4;
  int multiplier = 4;
  /// Cells per stage; for supernet stages this is the stage's n_cells.
  std::array<int, 3> cells_per_stage{2, 2, 2};
  int window_m = 3;
  int n_min = 4;
  CellSource cells = CellSource::kSearchShared;
  StageSource stages = StageSource::kChain;
  std::vector<CellGenotype> normal;     // kGenotype: 1 or 3
  std::vector<CellGenotype> reduction;  // kGenotype: 1 or 2
  std::array<StageGenotype, 3> stage_genotypes;

  StageSpec stage_spec(int stage) const;
};

/// Spec that builds the discrete network described by a genotype.
NetworkSpec spec_from_genotype(const Genotype& g, int n_intermediate_hint = 0);

/// Stem -> stage 1 -> reduction -> stage 2 -> reduction -> stage 3 -> GAP ->
/// linear. Stage inputs are (stem, stem) for the first stage and
/// (factorized-reduce(previous first output), reduction output) afterwards;
/// reduction cells consume the previous stage's two output cells.
class Network {
 public:
  Network(const NetworkSpec& spec, std::uint64_t seed);

  Var forward(ForwardCtx& ctx, Var images);

  const NetworkSpec& spec() const { return spec_; }
  ParamStore& weights() { return weights_; }
  ParamStore& arch() { return arch_; }
  const ParamStore& weights() const { return weights_; }
  const ParamStore& arch() const { return arch_; }

  /// Cell tables: normal (1 or 3) then reduction (1 or 2); empty in genotype
  /// mode.
  const std::vector<Parameter*>& normal_alphas() const { return normal_alphas_; }
  const std::vector<Parameter*>& reduction_alphas() const { return reduction_alphas_; }
  const std::vector<Parameter*>& stage_alphas() const { return stage_alphas_; }
  const std::vector<Parameter*>& betas() const { return betas_; }

  /// Depth and complexity losses bound into `g` (zero scalars when the
  /// network has no stage supernet).
  Var depth_loss(ForwardCtx& ctx, bool normalize_window);
  Var complexity_loss(ForwardCtx& ctx, const std::vector<double>& theta);

  std::vector<CellGenotype> derive_normal() const;
  std::vector<CellGenotype> derive_reduction() const;
  std::array<StageGenotype, 3> derive_stages(const std::array<int, 3>& retained) const;
  std::array<int, 3> derive_retained() const;

  std::size_t num_weights() const { return weights_.numel(); }

 private:
  struct StageCells {
    std::vector<std::unique_ptr<CellModule>> cells;
  };

  std::unique_ptr<CellModule> make_cell(const std::string& name, bool reduction, int index,
                                        int c_in0, int c_in1, int channels);

  NetworkSpec spec_;
  ParamStore weights_;
  ParamStore arch_;
  std::vector<Parameter*> normal_alphas_, reduction_alphas_, stage_alphas_, betas_;
  Conv stem_conv_;
  BatchNorm stem_bn_;
  std::array<StageCells, 3> stages_;
  std::array<std::unique_ptr<CellModule>, 2> reductions_;
  std::array<std::unique_ptr<FactorizedReduce>, 2> skips_;
  std::unique_ptr<Linear> head_;
};

}  // namespace hdas
