#include "hdas/stage.hpp"

#include <algorithm>

#include "hdas/error.hpp"

namespace hdas {

int StageSpec::n_edges() const {
  int n = 0;
  for (int c = 0; c < n_cells; ++c) n += window_size(c);
  return n;
}

int StageSpec::edge_index(int cell, int pred) const {
  const int lo = window_begin(cell);
  if (pred < lo || pred >= cell + 2) {
    fail(ErrorKind::kInvalidArgument, "stage: node " + std::to_string(pred) + " outside window of cell " +
                                          std::to_string(cell) + " [" + std::to_string(lo) + ", " +
                                          std::to_string(cell + 2) + ")");
  }
  int offset = 0;
  for (int c = 0; c < cell; ++c) offset += window_size(c);
  return offset + pred - lo;
}

void StageSpec::check() const {
  if (n_cells < 1) fail(ErrorKind::kInvalidArgument, "stage: n_cells must be >= 1");
  if (window_m < 2 || window_m > n_cells + 1) {
    fail(ErrorKind::kInvalidArgument, "stage: window_m must lie in [2, n_cells + 1], got " +
                                          std::to_string(window_m));
  }
  if (n_min < 2 || n_min > n_cells) {
    fail(ErrorKind::kInvalidArgument, "stage: n_min must lie in [2, n_cells], got " + std::to_string(n_min));
  }
}

StageOutput stage_forward(const std::array<Var, 2>& inputs, const StageSpec& spec,
                          std::optional<Var> alpha, std::optional<Var> beta,
                          const CellEval& cell_eval, StageMode mode) {
  if (mode != StageMode::kChain) {
    if (!alpha) fail(ErrorKind::kInvalidArgument, "stage_forward: alpha required");
    if (alpha->shape() != Shape{spec.n_edges(), kNumStageOps}) {
      fail(ErrorKind::kShape, "stage_forward: alpha " + shape_str(alpha->shape()) + " expected [" +
                                  std::to_string(spec.n_edges()) + "," + std::to_string(kNumStageOps) + "]");
    }
  }
  if (mode == StageMode::kDistribution) {
    if (!beta) fail(ErrorKind::kInvalidArgument, "stage_forward: beta required in distribution mode");
    if (beta->shape() != Shape{spec.n_pairs()}) {
      fail(ErrorKind::kShape, "stage_forward: beta " + shape_str(beta->shape()) + " expected [" +
                                  std::to_string(spec.n_pairs()) + "]");
    }
  }
  std::vector<Var> nodes{inputs[0], inputs[1]};
  for (int c = 0; c < spec.n_cells; ++c) {
    Var in;
    if (mode == StageMode::kChain) {
      in = nodes[static_cast<std::size_t>(c + 1)];
    } else {
      std::vector<Var> terms;
      for (int j = spec.window_begin(c); j < c + 2; ++j) {
        terms.push_back(stage_mixed_op(nodes[static_cast<std::size_t>(j)], row(*alpha, spec.edge_index(c, j))));
      }
      in = add_n(terms);
    }
    nodes.push_back(cell_eval(c, in));
  }
  if (mode != StageMode::kDistribution) {
    return {nodes[static_cast<std::size_t>(spec.n_cells)], nodes[static_cast<std::size_t>(spec.n_cells + 1)]};
  }
  Var w = softmax(*beta, 0);
  std::vector<Var> firsts, seconds;
  std::vector<int> index;
  for (int p = 0; p < spec.n_pairs(); ++p) {
    firsts.push_back(nodes[static_cast<std::size_t>(p + spec.n_min)]);
    seconds.push_back(nodes[static_cast<std::size_t>(p + spec.n_min + 1)]);
    index.push_back(p);
  }
  return {weighted_sum(firsts, w, index), weighted_sum(seconds, w, index)};
}

StageOutput stage_forward(const std::array<Var, 2>& inputs, const StageGenotype& genotype,
                          const CellEval& cell_eval) {
  const auto errors = validate_stage(genotype);
  if (!errors.empty()) fail(ErrorKind::kValidation, "stage_forward: " + errors.front().message);
  std::vector<Var> nodes{inputs[0], inputs[1]};
  for (int c = 0; c < genotype.retained(); ++c) {
    const auto& e = genotype.cells[static_cast<std::size_t>(c)];
    Var a = apply_stage_op(e[0].op, nodes[static_cast<std::size_t>(e[0].pred)]);
    Var b = apply_stage_op(e[1].op, nodes[static_cast<std::size_t>(e[1].pred)]);
    nodes.push_back(cell_eval(c, add(a, b)));
  }
  const auto out = genotype.output();
  return {nodes[static_cast<std::size_t>(out[0])], nodes[static_cast<std::size_t>(out[1])]};
}

std::vector<double> depth_numbers(const Tensor& alpha, const StageSpec& spec, bool normalize_window) {
  if (alpha.shape() != Shape{spec.n_edges(), kNumStageOps}) {
    fail(ErrorKind::kShape, "depth_numbers: alpha " + shape_str(alpha.shape()));
  }
  std::vector<double> d{0.0, 0.0};
  for (int c = 0; c < spec.n_cells; ++c) {
    const int lo = spec.window_begin(c);
    if (lo >= c + 2) fail(ErrorKind::kInvalidArgument, "depth_numbers: empty window");
    std::vector<double> w;
    double total = 0.0;
    for (int j = lo; j < c + 2; ++j) {
      const int e = spec.edge_index(c, j);
      w.push_back(edge_strength(std::span<const double>(alpha.ptr() + e * kNumStageOps, kNumStageOps), true));
      total += w.back();
    }
    double dc = 0.0;
    for (int j = lo; j < c + 2; ++j) dc += w[static_cast<std::size_t>(j - lo)] * (d[static_cast<std::size_t>(j)] + 1.0);
    d.push_back(normalize_window ? dc / total : dc);
  }
  return d;
}

Var depth_loss(const std::vector<Var>& alphas, const std::vector<std::optional<Var>>& betas,
               const std::vector<StageSpec>& specs, bool normalize_window) {
  if (alphas.empty() || alphas.size() != specs.size() || betas.size() != specs.size()) {
    fail(ErrorKind::kInvalidArgument, "depth_loss: one alpha, beta slot and spec per stage");
  }
  std::vector<Var> stage_terms;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const StageSpec& spec = specs[s];
    const Var alpha = alphas[s];
    if (alpha.shape() != Shape{spec.n_edges(), kNumStageOps}) {
      fail(ErrorKind::kShape, "depth_loss: alpha " + shape_str(alpha.shape()));
    }
    std::optional<Var> beta_w;
    if (betas[s]) {
      if (betas[s]->shape() != Shape{spec.n_pairs()}) {
        fail(ErrorKind::kShape, "depth_loss: beta " + shape_str(betas[s]->shape()));
      }
      beta_w = softmax(*betas[s], 0);
    }
    // d_j + 1 for every node; inputs contribute the constant 1.
    std::vector<std::optional<Var>> d_plus_one{std::nullopt, std::nullopt};
    std::vector<Var> cell_terms;
    for (int c = 0; c < spec.n_cells; ++c) {
      const int lo = spec.window_begin(c);
      std::vector<Var> w;
      for (int j = lo; j < c + 2; ++j) w.push_back(edge_strength(row(alpha, spec.edge_index(c, j)), true));
      const Var total = add_n(w);
      std::vector<Var> parts;
      for (int j = lo; j < c + 2; ++j) {
        const Var wj = w[static_cast<std::size_t>(j - lo)];
        const auto& dj = d_plus_one[static_cast<std::size_t>(j)];
        parts.push_back(dj ? mul(wj, *dj) : wj);
      }
      // Normalizing the sum rather than each weight keeps a window of
      // depth-0 inputs at exactly 1.
      const Var dc = normalize_window ? div(add_n(parts), total) : add_n(parts);
      d_plus_one.push_back(add_scalar(dc, 1.0));
      const int i = c + 1;
      Var term = scale(dc, 1.0 / i);
      const int p = i - spec.n_min;
      if (beta_w && p >= 0 && p < spec.n_pairs()) {
        term = mul(term, add_scalar(scale(select(*beta_w, p), static_cast<double>(i)), 1.0));
      }
      cell_terms.push_back(term);
    }
    stage_terms.push_back(scale(add_n(cell_terms), 1.0 / spec.n_cells));
  }
  return scale(add_n(stage_terms), -1.0);
}

Var complexity_loss(const std::vector<Var>& betas, const std::vector<double>& theta, int n_min) {
  if (betas.empty() || betas.size() != theta.size()) {
    fail(ErrorKind::kInvalidArgument, "complexity_loss: one theta per stage");
  }
  std::vector<Var> terms;
  for (std::size_t s = 0; s < betas.size(); ++s) {
    const Tensor& bv = betas[s].value();
    if (bv.rank() != 1) fail(ErrorKind::kShape, "complexity_loss: beta must be rank 1");
    if (theta[s] <= 0.0) fail(ErrorKind::kInvalidArgument, "complexity_loss: theta must be positive");
    Tensor counts({bv.dim(0)});
    for (int j = 0; j < bv.dim(0); ++j) counts[static_cast<std::size_t>(j)] = j + n_min;
    Var expected = sum(mul(softmax(betas[s], 0), betas[s].graph().constant(std::move(counts))));
    terms.push_back(scale(expected, theta[s]));
  }
  return add_n(terms);
}

Var total_loss(Var cls, Var depth, Var comp, double delta, double gamma) {
  return add(cls, add(scale(depth, delta), scale(comp, gamma)));
}

StageGenotype derive_stage(const Tensor& alpha, const StageSpec& spec, int retained) {
  if (alpha.shape() != Shape{spec.n_edges(), kNumStageOps}) {
    fail(ErrorKind::kShape, "derive_stage: alpha " + shape_str(alpha.shape()));
  }
  if (retained < 1 || retained > spec.n_cells) {
    fail(ErrorKind::kInvalidArgument, "derive_stage: retained " + std::to_string(retained) +
                                          " outside [1, " + std::to_string(spec.n_cells) + "]");
  }
  const int none = static_cast<int>(StageOp::kNone);
  StageGenotype g;
  g.window = spec.window_m;
  for (int c = 0; c < retained; ++c) {
    struct Candidate {
      double score;
      int pred;
      int op;
    };
    std::vector<Candidate> cands;
    for (int j = spec.window_begin(c); j < c + 2; ++j) {
      const double* logits = alpha.ptr() + spec.edge_index(c, j) * kNumStageOps;
      const auto w = softmax_values(std::span<const double>(logits, kNumStageOps));
      int best = -1;
      for (int o = 0; o < kNumStageOps; ++o) {
        if (o == none) continue;
        if (best < 0 || logits[o] > logits[best]) best = o;
      }
      cands.push_back({w[static_cast<std::size_t>(best)], j, best});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::array<StageEdge, 2> edges{StageEdge{cands[0].pred, static_cast<StageOp>(cands[0].op)},
                                   StageEdge{cands[1].pred, static_cast<StageOp>(cands[1].op)}};
    if (edges[0].pred > edges[1].pred) std::swap(edges[0], edges[1]);
    g.cells.push_back(edges);
  }
  return g;
}

std::vector<int> derive_distribution(const std::vector<Tensor>& betas, int n_min) {
  std::vector<int> retained;
  for (const Tensor& b : betas) {
    if (b.rank() != 1 || b.size() == 0) fail(ErrorKind::kShape, "derive_distribution: beta must be a non-empty vector");
    std::size_t best = 0;
    for (std::size_t j = 1; j < b.size(); ++j) {
      if (b[j] > b[best]) best = j;
    }
    retained.push_back(static_cast<int>(best) + n_min);
  }
  return retained;
}

std::set<int> dead_cells(const StageGenotype& g) {
  const int n_nodes = g.retained() + 2;
  std::vector<bool> live(static_cast<std::size_t>(n_nodes), false);
  for (int node : g.output()) live[static_cast<std::size_t>(node)] = true;
  // Edges point from lower to higher node index, so one backward sweep
  // propagates liveness to every ancestor.
  for (int node = n_nodes - 1; node >= 2; --node) {
    if (!live[static_cast<std::size_t>(node)]) continue;
    for (const StageEdge& e : g.cells[static_cast<std::size_t>(node - 2)]) live[static_cast<std::size_t>(e.pred)] = true;
  }
  std::set<int> dead;
  for (int c = 0; c < g.retained(); ++c) {
    if (!live[static_cast<std::size_t>(c + 2)]) dead.insert(c);
  }
  return dead;
}

int stage_depth(const StageGenotype& g) {
  std::vector<int> depth{0, 0};
  for (const auto& edges : g.cells) {
    depth.push_back(1 + std::max(depth[static_cast<std::size_t>(edges[0].pred)],
                                 depth[static_cast<std::size_t>(edges[1].pred)]));
  }
  const auto out = g.output();
  return std::max(depth[static_cast<std::size_t>(out[0])], depth[static_cast<std::size_t>(out[1])]);
}

}  // namespace hdas
