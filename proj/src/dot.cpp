#include "hdas/dot.hpp"

#include <set>
#include <sstream>
#include <utility>

#include "hdas/stage.hpp"

namespace hdas {

namespace {

constexpr const char* kInputStyle = "shape=box, style=filled, fillcolor=\"#a6cee3\"";
constexpr const char* kInnerStyle = "shape=ellipse, style=filled, fillcolor=\"#d9d9d9\"";
constexpr const char* kDeadStyle =
    "shape=ellipse, style=\"filled,dashed\", fillcolor=\"#d9d9d9\", fontcolor=\"#7f7f7f\"";
constexpr const char* kOutputStyle = "shape=box, style=filled, fillcolor=\"#fdbf6f\"";

void header(std::ostringstream& out, const std::string& name) {
  out << "digraph \"" << name << "\" {\n";
  out << "  rankdir=LR;\n";
  out << "  node [fontname=\"Helvetica\"];\n";
  out << "  edge [fontname=\"Helvetica\", fontsize=10];\n";
}

}  // namespace

std::string cell_to_dot(const CellGenotype& g, const std::string& name) {
  std::ostringstream out;
  header(out, name);
  out << "  in0 [label=\"c_{k-2}\", class=\"input\", " << kInputStyle << "];\n";
  out << "  in1 [label=\"c_{k-1}\", class=\"input\", " << kInputStyle << "];\n";
  for (int k = 0; k < g.n_intermediate(); ++k) {
    out << "  n" << k << " [label=\"" << k << "\", class=\"node\", " << kInnerStyle << "];\n";
  }
  out << "  out [label=\"c_{k}\", class=\"output\", " << kOutputStyle << "];\n";
  auto id = [](int node) { return node < 2 ? "in" + std::to_string(node) : "n" + std::to_string(node - 2); };
  for (int k = 0; k < g.n_intermediate(); ++k) {
    for (const CellEdge& e : g.nodes[static_cast<std::size_t>(k)]) {
      out << "  " << id(e.pred) << " -> n" << k << " [label=\"" << op_name(e.op) << "\"];\n";
    }
  }
  for (int c : g.concat) out << "  " << id(c) << " -> out;\n";
  out << "}\n";
  return out.str();
}

std::string stage_to_dot(const StageGenotype& g, const std::string& name) {
  std::ostringstream out;
  header(out, name);
  const std::set<int> dead = dead_cells(g);
  out << "  in0 [label=\"s_{in,0}\", class=\"input\", " << kInputStyle << "];\n";
  out << "  in1 [label=\"s_{in,1}\", class=\"input\", " << kInputStyle << "];\n";
  for (int c = 0; c < g.retained(); ++c) {
    out << "  cell" << c << " [label=\"cell " << c << "\", class=\"node\", " << (dead.count(c) ? kDeadStyle : kInnerStyle)
        << "];\n";
  }
  out << "  out [label=\"concat\", class=\"output\", " << kOutputStyle << "];\n";
  auto id = [](int node) { return node < 2 ? "in" + std::to_string(node) : "cell" + std::to_string(node - 2); };
  for (int c = 0; c < g.retained(); ++c) {
    std::set<std::pair<int, int>> drawn;
    for (const StageEdge& e : g.cells[static_cast<std::size_t>(c)]) {
      if (!drawn.insert({e.pred, static_cast<int>(e.op)}).second) continue;
      out << "  " << id(e.pred) << " -> cell" << c << " [label=\"" << op_name(e.op) << "\"];\n";
    }
  }
  for (int node : g.output()) out << "  " << id(node) << " -> out;\n";
  out << "}\n";
  return out.str();
}

std::string chain_to_dot(int n_cells, const std::string& name) {
  std::ostringstream out;
  header(out, name);
  out << "  in0 [label=\"s_{in,0}\", class=\"input\", " << kInputStyle << "];\n";
  out << "  in1 [label=\"s_{in,1}\", class=\"input\", " << kInputStyle << "];\n";
  for (int c = 0; c < n_cells; ++c) {
    out << "  cell" << c << " [label=\"cell " << c << "\", class=\"node\", " << kInnerStyle << "];\n";
  }
  out << "  out [label=\"concat\", class=\"output\", " << kOutputStyle << "];\n";
  auto id = [](int node) { return node < 2 ? "in" + std::to_string(node) : "cell" + std::to_string(node - 2); };
  for (int c = 0; c < n_cells; ++c) out << "  " << id(c + 1) << " -> cell" << c << " [label=\"skip_connect\"];\n";
  out << "  " << id(n_cells) << " -> out;\n";
  out << "  " << id(n_cells + 1) << " -> out;\n";
  out << "}\n";
  return out.str();
}

std::string export_dot(const Genotype& g) {
  std::string out;
  for (std::size_t i = 0; i < g.normal.size(); ++i) out += cell_to_dot(g.normal[i], "normal" + std::to_string(i));
  for (std::size_t i = 0; i < g.reduction.size(); ++i) {
    out += cell_to_dot(g.reduction[i], "reduce" + std::to_string(i));
  }
  for (int s = 0; s < 3; ++s) {
    const std::string name = "stage" + std::to_string(s);
    out += g.stages ? stage_to_dot((*g.stages)[static_cast<std::size_t>(s)], name)
                    : chain_to_dot(g.cells_per_stage[static_cast<std::size_t>(s)], name);
  }
  return out;
}

}  // namespace hdas
