#pragma once

// Reference implementations used by the unit tests and the acceptance
// runner. They follow the definitions directly (path enumeration, plain
// loops) and share no code with the library beyond its data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "hdas/genotype.hpp"
#include "hdas/nn.hpp"
#include "hdas/stage.hpp"

namespace oracle {

using hdas::Rng;
using hdas::StageGenotype;
using hdas::StageSpec;
using hdas::Tensor;

inline std::vector<double> softmax(const double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  std::vector<double> p(static_cast<std::size_t>(n));
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += p[static_cast<std::size_t>(i)] = std::exp(x[i] - m);
  for (double& v : p) v /= z;
  return p;
}

/// Rows of the stage alpha table, in (cell, predecessor) order.
inline int edge_row(int cell, int pred, int window) {
  int row = 0;
  for (int c = 0; c < cell; ++c) row += std::min(c + 2, window);
  return row + pred - std::max(0, cell + 2 - window);
}

/// Non-none probability mass of an edge (none is the last stage op).
inline double strength(const Tensor& alpha, int row) {
  const auto p = softmax(alpha.ptr() + row * 4, 4);
  return p[0] + p[1] + p[2];
}

/// Normalized (or raw) edge weight of pred -> cell.
inline double edge_weight(const Tensor& alpha, const StageSpec& spec, int cell, int pred, bool normalize) {
  const double w = strength(alpha, edge_row(cell, pred, spec.window_m));
  if (!normalize) return w;
  double total = 0.0;
  for (int j = std::max(0, cell + 2 - spec.window_m); j < cell + 2; ++j) {
    total += strength(alpha, edge_row(cell, j, spec.window_m));
  }
  return w / total;
}

/// Depth number of cell `cell` by expanding the recursion into a sum over
/// every backward walk: each edge taken contributes the product of the
/// weights along the walk so far.
inline double expanded_depth(const Tensor& alpha, const StageSpec& spec, int cell, bool normalize) {
  double total = 0.0;
  std::function<void(int, double)> walk = [&](int node, double product) {
    const int c = node - 2;
    for (int j = std::max(0, c + 2 - spec.window_m); j < c + 2; ++j) {
      const double p = product * edge_weight(alpha, spec, c, j, normalize);
      total += p;
      if (j >= 2) walk(j, p);
    }
  };
  walk(cell + 2, 1.0);
  return total;
}

/// -sum_s 1/N sum_{i=1..N} (1/i) d_i [* (1 + i * softmax(beta)_{i - n_min})].
inline double depth_loss(const std::vector<Tensor>& alphas, const std::vector<std::optional<Tensor>>& betas,
                         const std::vector<StageSpec>& specs, bool normalize = true) {
  double loss = 0.0;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const StageSpec& spec = specs[s];
    std::vector<double> sb;
    if (betas[s]) sb = softmax(betas[s]->ptr(), betas[s]->dim(0));
    double stage = 0.0;
    for (int i = 1; i <= spec.n_cells; ++i) {
      double term = expanded_depth(alphas[s], spec, i - 1, normalize) / i;
      const int p = i - spec.n_min;
      if (!sb.empty() && p >= 0 && p < static_cast<int>(sb.size())) term *= 1.0 + i * sb[static_cast<std::size_t>(p)];
      stage += term;
    }
    loss -= stage / spec.n_cells;
  }
  return loss;
}

inline Tensor random_alpha(Rng& rng, const StageSpec& spec, double scale = 2.0) {
  int rows = 0;
  for (int c = 0; c < spec.n_cells; ++c) rows += std::min(c + 2, spec.window_m);
  Tensor t({rows, 4});
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

/// Uniform random stage DAG: two distinct window predecessors per cell.
inline StageGenotype random_stage(Rng& rng, int n_cells, int window) {
  StageGenotype g;
  g.window = window;
  for (int c = 0; c < n_cells; ++c) {
    const int lo = std::max(0, c + 2 - window), n = c + 2 - lo;
    const int a = rng.uniform_int(n);
    int b = rng.uniform_int(n - 1);
    if (b >= a) ++b;
    g.cells.push_back({hdas::StageEdge{lo + std::min(a, b), static_cast<hdas::StageOp>(rng.uniform_int(3))},
                       hdas::StageEdge{lo + std::max(a, b), static_cast<hdas::StageOp>(rng.uniform_int(3))}});
  }
  return g;
}

/// Every directed path from a stage input to an output node, as node lists.
inline std::vector<std::vector<int>> input_output_paths(const StageGenotype& g) {
  const int n_nodes = g.retained() + 2;
  std::vector<std::vector<int>> succ(static_cast<std::size_t>(n_nodes));
  for (int c = 0; c < g.retained(); ++c) {
    std::set<int> preds;
    for (const auto& e : g.cells[static_cast<std::size_t>(c)]) preds.insert(e.pred);
    for (int p : preds) succ[static_cast<std::size_t>(p)].push_back(c + 2);
  }
  const auto out = g.output();
  std::vector<std::vector<int>> paths;
  std::vector<int> path;
  std::function<void(int)> dfs = [&](int node) {
    path.push_back(node);
    if (node == out[0] || node == out[1]) paths.push_back(path);
    for (int next : succ[static_cast<std::size_t>(node)]) dfs(next);
    path.pop_back();
  };
  dfs(0);
  dfs(1);
  return paths;
}

/// Cells lying on no input-to-output path. Every cell is reachable from an
/// input, so this is exactly the set of cells with no path to an output.
inline std::set<int> dead_cells(const StageGenotype& g) {
  std::set<int> live;
  for (const auto& p : input_output_paths(g)) {
    for (int node : p) {
      if (node >= 2) live.insert(node - 2);
    }
  }
  std::set<int> dead;
  for (int c = 0; c < g.retained(); ++c) {
    if (!live.count(c)) dead.insert(c);
  }
  return dead;
}

/// Most cells on any input-to-output path.
inline int stage_depth(const StageGenotype& g) {
  int best = 0;
  for (const auto& p : input_output_paths(g)) {
    best = std::max(best, static_cast<int>(std::count_if(p.begin(), p.end(), [](int n) { return n >= 2; })));
  }
  return best;
}

}  // namespace oracle
