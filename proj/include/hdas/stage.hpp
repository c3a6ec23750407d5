#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "hdas/genotype.hpp"

namespace hdas {

/// Stage-level search space. Node indexing: 0 and 1 are the stage inputs
/// (depth 0), node c + 2 is cell c.
struct StageSpec {
  int n_cells = 6;
  int window_m = 3;
  int n_min = 4;

  /// First node in cell c's window; the window ends at node c + 1.
  int window_begin(int cell) const { return std::max(0, cell + 2 - window_m); }
  int window_size(int cell) const { return cell + 2 - window_begin(cell); }
  int n_edges() const;
  /// Row of the stage alpha table for edge (node `pred` -> cell `cell`).
  int edge_index(int cell, int pred) const;
  /// Candidate output pairs in distribution search: n_cells - n_min + 1.
  int n_pairs() const { return n_cells - n_min + 1; }
  void check() const;
};

enum class StageMode {
  kChain,         // cell c consumes node c + 1 only
  kFixedCount,    // DAG supernet, output = last two cells
  kDistribution,  // DAG supernet, output = beta-weighted pairs
};

struct StageOutput {
  Var first;   // output cell a (or its beta-weighted mixture)
  Var second;  // output cell b
  Var concat() const { return concat_channels({first, second}); }
};

/// Evaluates cell `index` on its aggregated input.
using CellEval = std::function<Var(int index, Var input)>;

/// Relaxed stage: each cell's input is the sum of stage-level mixed ops over
/// its window. `alpha` is [n_edges, 4]; `beta` ([n_pairs]) is required in
/// distribution mode. Chain mode ignores alpha.
StageOutput stage_forward(const std::array<Var, 2>& inputs, const StageSpec& spec,
                          std::optional<Var> alpha, std::optional<Var> beta,
                          const CellEval& cell_eval, StageMode mode);

/// Discrete stage: each cell's input is op_a(X_a) + op_b(X_b).
StageOutput stage_forward(const std::array<Var, 2>& inputs, const StageGenotype& genotype,
                          const CellEval& cell_eval);

/// Recursive depth numbers of every node (inputs first, both 0):
/// d_c = sum_{j in window(c)} wbar_{c,j} (d_j + 1), with w = edge strength,
/// optionally normalized over the window.
std::vector<double> depth_numbers(const Tensor& alpha, const StageSpec& spec,
                                  bool normalize_window = true);

/// -sum_stages (1/N) sum_{i=1..N} (1/i) d_i [* (1 + i softmax(beta)_{p(i)})],
/// where p(i) = i - n_min is the pair whose retained count ends at cell i.
Var depth_loss(const std::vector<Var>& alphas, const std::vector<std::optional<Var>>& betas,
               const std::vector<StageSpec>& specs, bool normalize_window = true);

/// sum_s theta_s sum_j softmax(beta_s)_j (j + n_min).
Var complexity_loss(const std::vector<Var>& betas, const std::vector<double>& theta, int n_min);

Var total_loss(Var cls, Var depth, Var comp, double delta, double gamma);

/// Truncates to the first `retained` cells, then per cell keeps the two
/// window predecessors with the largest non-none softmax weight and their
/// argmax non-none op (ties: lower predecessor, lower op).
StageGenotype derive_stage(const Tensor& alpha, const StageSpec& spec, int retained);

/// argmax pair per stage (ties: fewer cells) -> retained = j + n_min.
std::vector<int> derive_distribution(const std::vector<Tensor>& betas, int n_min);

/// Cells (0-based) with no directed path to either output cell.
std::set<int> dead_cells(const StageGenotype& g);

/// Cells on the longest path from a stage input to an output cell.
int stage_depth(const StageGenotype& g);

}  // namespace hdas
