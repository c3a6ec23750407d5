#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hdas/ops_catalog.hpp"

namespace hdas {

struct CellEdge {
  int pred = 0;  // 0,1 = cell inputs; k+2 = intermediate node k
  CellOp op = CellOp::kSkipConnect;
  bool operator==(const CellEdge&) const = default;
};

/// Discrete cell: two (predecessor, op) records per intermediate node, output
/// is the channel-concat of `concat` (node indices).
struct CellGenotype {
  std::vector<std::array<CellEdge, 2>> nodes;
  std::vector<int> concat;
  bool operator==(const CellGenotype&) const = default;

  int n_intermediate() const { return static_cast<int>(nodes.size()); }
  int multiplier() const { return static_cast<int>(concat.size()); }
};

struct StageEdge {
  int pred = 0;  // 0,1 = stage inputs; i+2 = cell i
  StageOp op = StageOp::kSkipConnect;
  bool operator==(const StageEdge&) const = default;
};

/// Discrete stage-level DAG over `retained()` cells. The stage output is the
/// concat of the last two nodes.
struct StageGenotype {
  int window = 3;
  std::vector<std::array<StageEdge, 2>> cells;
  bool operator==(const StageGenotype&) const = default;

  int retained() const { return static_cast<int>(cells.size()); }
  std::array<int, 2> output() const { return {retained(), retained() + 1}; }
};

/// Complete discrete architecture: stage-specific (3) or shared (1) normal
/// cells, 2 or 1 reduction cells, and either stage DAGs or the sequential
/// chain.
struct Genotype {
  std::vector<CellGenotype> normal;
  std::vector<CellGenotype> reduction;
  std::optional<std::array<StageGenotype, 3>> stages;  // nullopt = chain
  std::array<int, 3> cells_per_stage{2, 2, 2};
  int init_channels = 8;
  int num_classes = 4;
  std::uint64_t source = 0;
  bool operator==(const Genotype&) const = default;

  const CellGenotype& normal_cell(int stage) const {
    return normal.size() == 1 ? normal[0] : normal[static_cast<std::size_t>(stage)];
  }
  const CellGenotype& reduction_cell(int index) const {
    return reduction.size() == 1 ? reduction[0] : reduction[static_cast<std::size_t>(index)];
  }
};

/// Discrete sequential stage: cell i reads nodes i and i + 1 through
/// skip_connect, so no cell is dead and the depth equals the cell count.
StageGenotype chain_stage(int n_cells, int window);

struct ValidationError {
  int line = 0;  // 0 when not tied to a line
  std::string message;
};

/// Structural checks; empty when valid.
std::vector<ValidationError> validate_cell(const CellGenotype& g);
std::vector<ValidationError> validate_stage(const StageGenotype& g);
std::vector<ValidationError> validate_genotype(const Genotype& g);

std::string serialize_cell(const CellGenotype& g);
std::string serialize_stage(const StageGenotype& g);
std::string serialize_genotype(const Genotype& g);

struct ParseResult {
  std::optional<Genotype> genotype;
  std::vector<ValidationError> errors;
};

/// Parses and validates genotype text; errors carry line numbers.
ParseResult parse_genotype(const std::string& text);

/// FNV-1a of the serialized form, as 16 hex digits.
std::string genotype_hash(const Genotype& g);

}  // namespace hdas
