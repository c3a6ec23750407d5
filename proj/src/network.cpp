#include "hdas/network.hpp"

#include "hdas/error.hpp"

namespace hdas {

StageSpec NetworkSpec::stage_spec(int stage) const {
  StageSpec s;
  s.n_cells = cells_per_stage[static_cast<std::size_t>(stage)];
  s.window_m = std::min(window_m, s.n_cells + 1);
  s.n_min = std::min(n_min, s.n_cells);
  return s;
}

NetworkSpec spec_from_genotype(const Genotype& g, int n_intermediate_hint) {
  const auto errors = validate_genotype(g);
  if (!errors.empty()) fail(ErrorKind::kValidation, "genotype: " + errors.front().message);
  NetworkSpec spec;
  spec.init_channels = g.init_channels;
  spec.num_classes = g.num_classes;
  spec.n_intermediate = n_intermediate_hint > 0 ? n_intermediate_hint : g.normal[0].n_intermediate();
  spec.multiplier = g.normal[0].multiplier();
  spec.cells_per_stage = g.cells_per_stage;
  spec.cells = CellSource::kGenotype;
  spec.normal = g.normal;
  spec.reduction = g.reduction;
  if (g.stages) {
    spec.stages = StageSource::kGenotype;
    spec.stage_genotypes = *g.stages;
  } else {
    spec.stages = StageSource::kChain;
  }
  return spec;
}

namespace {

int stage_channels(const NetworkSpec& spec, int stage) { return spec.init_channels << stage; }

}  // namespace

Network::Network(const NetworkSpec& spec, std::uint64_t seed)
    : spec_(spec),
      weights_(seed),
      arch_(seed),
      stem_conv_(weights_, "stem.conv", spec.in_channels, spec.multiplier * spec.init_channels, 3, {}),
      stem_bn_(weights_, "stem.bn", spec.multiplier * spec.init_channels) {
  if (spec.init_channels < 1 || spec.num_classes < 2 || spec.multiplier < 1 ||
      spec.multiplier > spec.n_intermediate) {
    fail(ErrorKind::kInvalidArgument, "network: invalid channel, class or cell sizes");
  }
  const CellSpec cell_spec{spec.n_intermediate, spec.multiplier, false};
  const Shape cell_table{cell_spec.n_edges(), kNumCellOps};
  switch (spec.cells) {
    case CellSource::kSearchStageSpecific:
      for (int s = 0; s < 3; ++s) normal_alphas_.push_back(&arch_.add_logits("alpha.normal" + std::to_string(s), cell_table));
      for (int r = 0; r < 2; ++r) reduction_alphas_.push_back(&arch_.add_logits("alpha.reduce" + std::to_string(r), cell_table));
      break;
    case CellSource::kSearchShared:
      normal_alphas_.push_back(&arch_.add_logits("alpha.normal", cell_table));
      reduction_alphas_.push_back(&arch_.add_logits("alpha.reduce", cell_table));
      break;
    case CellSource::kGenotype:
      if ((spec.normal.size() != 1 && spec.normal.size() != 3) ||
          (spec.reduction.size() != 1 && spec.reduction.size() != 2)) {
        fail(ErrorKind::kInvalidArgument, "network: expected 1 or 3 normal and 1 or 2 reduction genotypes");
      }
      for (const auto* list : {&spec.normal, &spec.reduction}) {
        for (const CellGenotype& g : *list) {
          if (g.multiplier() != spec.multiplier) {
            fail(ErrorKind::kValidation, "network: cell concat width differs from multiplier");
          }
        }
      }
      break;
  }
  for (int s = 0; s < 3; ++s) {
    const StageSpec ss = spec.stage_spec(s);
    if (spec.stages == StageSource::kSupernet || spec.stages == StageSource::kDistribution) {
      ss.check();
      stage_alphas_.push_back(&arch_.add_logits("alpha.stage" + std::to_string(s), {ss.n_edges(), kNumStageOps}));
      if (spec.stages == StageSource::kDistribution) {
        betas_.push_back(&arch_.add_logits("beta.stage" + std::to_string(s), {ss.n_pairs()}));
      }
    }
    int n_cells = ss.n_cells;
    if (spec.stages == StageSource::kGenotype) {
      n_cells = spec.stage_genotypes[static_cast<std::size_t>(s)].retained();
      if (n_cells != ss.n_cells) {
        fail(ErrorKind::kValidation, "network: stage " + std::to_string(s) + " genotype retains " +
                                         std::to_string(n_cells) + " cells, expected " + std::to_string(ss.n_cells));
      }
    }
    const int width = spec.multiplier * stage_channels(spec, s);
    for (int c = 0; c < n_cells; ++c) {
      stages_[static_cast<std::size_t>(s)].cells.push_back(
          make_cell("stage" + std::to_string(s) + ".cell" + std::to_string(c), false, s, width, width,
                    stage_channels(spec, s)));
    }
  }
  for (int r = 0; r < 2; ++r) {
    const int in_width = spec.multiplier * stage_channels(spec, r);
    const int out_width = spec.multiplier * stage_channels(spec, r + 1);
    reductions_[static_cast<std::size_t>(r)] =
        make_cell("reduce" + std::to_string(r), true, r, in_width, in_width, stage_channels(spec, r + 1));
    skips_[static_cast<std::size_t>(r)] =
        std::make_unique<FactorizedReduce>(weights_, "skip" + std::to_string(r), in_width, out_width);
  }
  head_ = std::make_unique<Linear>(weights_, "head", 2 * spec.multiplier * stage_channels(spec, 2),
                                   spec.num_classes);
}

std::unique_ptr<CellModule> Network::make_cell(const std::string& name, bool reduction, int index,
                                               int c_in0, int c_in1, int channels) {
  if (spec_.cells == CellSource::kGenotype) {
    const auto& list = reduction ? spec_.reduction : spec_.normal;
    const CellGenotype& g = list.size() == 1 ? list[0] : list[static_cast<std::size_t>(index)];
    return std::make_unique<DerivedCell>(weights_, name, g, reduction, c_in0, c_in1, channels);
  }
  const auto& tables = reduction ? reduction_alphas_ : normal_alphas_;
  Parameter& alpha = *tables[tables.size() == 1 ? 0 : static_cast<std::size_t>(index)];
  return std::make_unique<MixedCell>(weights_, name, CellSpec{spec_.n_intermediate, spec_.multiplier, reduction},
                                     c_in0, c_in1, channels, alpha);
}

Var Network::forward(ForwardCtx& ctx, Var images) {
  if (images.shape().size() != 4 || images.shape()[1] != spec_.in_channels) {
    fail(ErrorKind::kShape, "network: expected images [N," + std::to_string(spec_.in_channels) +
                                ",H,W], got " + shape_str(images.shape()));
  }
  Var x = stem_bn_.forward(ctx, stem_conv_.forward(ctx, images));
  std::array<Var, 2> inputs{x, x};
  Var features;
  for (int s = 0; s < 3; ++s) {
    auto& cells = stages_[static_cast<std::size_t>(s)].cells;
    const CellEval eval = [&](int c, Var in) { return cells[static_cast<std::size_t>(c)]->forward(ctx, in, in); };
    const StageSpec ss = spec_.stage_spec(s);
    StageOutput out;
    switch (spec_.stages) {
      case StageSource::kChain:
        out = stage_forward(inputs, ss, std::nullopt, std::nullopt, eval, StageMode::kChain);
        break;
      case StageSource::kSupernet:
        out = stage_forward(inputs, ss, ctx.bind(*stage_alphas_[static_cast<std::size_t>(s)]), std::nullopt,
                            eval, StageMode::kFixedCount);
        break;
      case StageSource::kDistribution:
        out = stage_forward(inputs, ss, ctx.bind(*stage_alphas_[static_cast<std::size_t>(s)]),
                            ctx.bind(*betas_[static_cast<std::size_t>(s)]), eval, StageMode::kDistribution);
        break;
      case StageSource::kGenotype:
        out = stage_forward(inputs, spec_.stage_genotypes[static_cast<std::size_t>(s)], eval);
        break;
    }
    if (s < 2) {
      Var reduced = reductions_[static_cast<std::size_t>(s)]->forward(ctx, out.first, out.second);
      inputs = {skips_[static_cast<std::size_t>(s)]->forward(ctx, out.first), reduced};
    } else {
      features = out.concat();
    }
  }
  return head_->forward(ctx, global_avg_pool(features));
}

Var Network::depth_loss(ForwardCtx& ctx, bool normalize_window) {
  if (stage_alphas_.empty()) return ctx.graph().constant(Tensor::scalar(0.0));
  std::vector<Var> alphas;
  std::vector<std::optional<Var>> betas;
  std::vector<StageSpec> specs;
  for (int s = 0; s < 3; ++s) {
    alphas.push_back(ctx.bind(*stage_alphas_[static_cast<std::size_t>(s)]));
    betas.push_back(betas_.empty() ? std::nullopt
                                   : std::optional<Var>(ctx.bind(*betas_[static_cast<std::size_t>(s)])));
    specs.push_back(spec_.stage_spec(s));
  }
  return hdas::depth_loss(alphas, betas, specs, normalize_window);
}

Var Network::complexity_loss(ForwardCtx& ctx, const std::vector<double>& theta) {
  if (betas_.empty()) return ctx.graph().constant(Tensor::scalar(0.0));
  std::vector<Var> betas;
  for (Parameter* b : betas_) betas.push_back(ctx.bind(*b));
  int n_min = spec_.stage_spec(0).n_min;
  for (int s = 1; s < 3; ++s) {
    if (spec_.stage_spec(s).n_min != n_min) fail(ErrorKind::kInvalidArgument, "complexity_loss: n_min differs across stages");
  }
  return hdas::complexity_loss(betas, theta, n_min);
}

std::vector<CellGenotype> Network::derive_normal() const {
  std::vector<CellGenotype> out;
  for (const Parameter* a : normal_alphas_) out.push_back(derive_cell(a->value, spec_.n_intermediate, spec_.multiplier));
  return out;
}

std::vector<CellGenotype> Network::derive_reduction() const {
  std::vector<CellGenotype> out;
  for (const Parameter* a : reduction_alphas_) {
    out.push_back(derive_cell(a->value, spec_.n_intermediate, spec_.multiplier));
  }
  return out;
}

std::array<StageGenotype, 3> Network::derive_stages(const std::array<int, 3>& retained) const {
  if (stage_alphas_.empty()) fail(ErrorKind::kInvalidArgument, "derive_stages: network has no stage supernet");
  std::array<StageGenotype, 3> out;
  for (int s = 0; s < 3; ++s) {
    out[static_cast<std::size_t>(s)] = derive_stage(stage_alphas_[static_cast<std::size_t>(s)]->value,
                                                    spec_.stage_spec(s), retained[static_cast<std::size_t>(s)]);
  }
  return out;
}

std::array<int, 3> Network::derive_retained() const {
  if (betas_.empty()) fail(ErrorKind::kInvalidArgument, "derive_retained: network has no beta tables");
  std::array<int, 3> out{};
  for (int s = 0; s < 3; ++s) {
    out[static_cast<std::size_t>(s)] =
        derive_distribution({betas_[static_cast<std::size_t>(s)]->value}, spec_.stage_spec(s).n_min)[0];
  }
  return out;
}

}  // namespace hdas
