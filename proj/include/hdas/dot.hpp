#pragma once

#include <string>

#include "hdas/genotype.hpp"

namespace hdas {

/// Graphviz text for one cell. Inputs, intermediate nodes and the output
/// use three distinct styles.
std::string cell_to_dot(const CellGenotype& g, const std::string& name);
/// Graphviz text for one stage DAG. Identical parallel edges are drawn once
/// and dead cells are dashed.
std::string stage_to_dot(const StageGenotype& g, const std::string& name);
/// The sequential stage of a chain genotype: cell c reads node c + 1.
std::string chain_to_dot(int n_cells, const std::string& name);
/// Every cell and stage of a genotype, one digraph each, in a fixed order.
std::string export_dot(const Genotype& g);

}  // namespace hdas
