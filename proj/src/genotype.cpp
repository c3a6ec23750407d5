#include "hdas/genotype.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "hdas/nn.hpp"

namespace hdas {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<int> parse_int(std::string_view s) {
  const std::string t = trim(s);
  int v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

std::optional<std::vector<int>> parse_int_list(std::string_view s) {
  std::vector<int> out;
  std::string item;
  std::stringstream ss{std::string(s)};
  while (std::getline(ss, item, ',')) {
    auto v = parse_int(item);
    if (!v) return std::nullopt;
    out.push_back(*v);
  }
  if (out.empty()) return std::nullopt;
  return out;
}

// "(a, b)" -> {a, "b"}
struct PairText {
  std::string first, second;
};

std::optional<std::vector<PairText>> parse_pairs(std::string_view s) {
  std::vector<PairText> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t open = s.find('(', i);
    if (open == std::string_view::npos) {
      if (!trim(s.substr(i)).empty()) return std::nullopt;
      break;
    }
    const std::string between = trim(s.substr(i, open - i));
    if (!(between.empty() || between == ",")) return std::nullopt;
    const std::size_t close = s.find(')', open);
    if (close == std::string_view::npos) return std::nullopt;
    const std::string_view inner = s.substr(open + 1, close - open - 1);
    const std::size_t comma = inner.find(',');
    if (comma == std::string_view::npos) return std::nullopt;
    out.push_back({trim(inner.substr(0, comma)), trim(inner.substr(comma + 1))});
    i = close + 1;
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(v[i]);
  }
  return s;
}

void check_cell_node(const std::array<CellEdge, 2>& edges, int k, int line,
                     std::vector<ValidationError>& errors) {
  for (const CellEdge& e : edges) {
    if (e.pred < 0 || e.pred >= k + 2) {
      errors.push_back({line, "node " + std::to_string(k) + ": predecessor " + std::to_string(e.pred) +
                                  " must lie in [0, " + std::to_string(k + 2) + ")"});
    }
    if (e.op == CellOp::kNone) {
      errors.push_back({line, "node " + std::to_string(k) + ": none is not a valid discrete operation"});
    }
  }
  if (edges[0].pred == edges[1].pred) {
    errors.push_back({line, "node " + std::to_string(k) + ": duplicate predecessor " +
                                std::to_string(edges[0].pred)});
  }
}

void check_cell_concat(const CellGenotype& g, int line, std::vector<ValidationError>& errors) {
  const int n = g.n_intermediate();
  const int m = g.multiplier();
  if (m < 1 || m > n) {
    errors.push_back({line, "concat must list between 1 and " + std::to_string(n) + " nodes"});
    return;
  }
  for (int i = 0; i < m; ++i) {
    if (g.concat[static_cast<std::size_t>(i)] != n + 2 - m + i) {
      errors.push_back({line, "concat must be the last " + std::to_string(m) +
                                  " intermediate nodes, got [" + join_ints(g.concat) + "]"});
      return;
    }
  }
}

void check_stage_cell(const std::array<StageEdge, 2>& edges, int i, int window, int line,
                      std::vector<ValidationError>& errors) {
  const int hi = i + 2;
  const int lo = std::max(0, hi - window);
  for (const StageEdge& e : edges) {
    if (e.pred < lo || e.pred >= hi) {
      errors.push_back({line, "cell " + std::to_string(i) + ": predecessor " + std::to_string(e.pred) +
                                  " outside window [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + ") (window " + std::to_string(window) + ")"});
    }
    if (e.op == StageOp::kNone) {
      errors.push_back({line, "cell " + std::to_string(i) + ": none is not a valid discrete operation"});
    }
  }
  if (edges[0].pred == edges[1].pred) {
    errors.push_back({line, "cell " + std::to_string(i) + ": duplicate predecessor " +
                                std::to_string(edges[0].pred)});
  }
}

}  // namespace

StageGenotype chain_stage(int n_cells, int window) {
  // Sequential wiring: the immediate predecessor on one edge, the node before
  // it on the other. Cell 0 takes both stage inputs.
  StageGenotype g;
  g.window = window;
  for (int i = 0; i < n_cells; ++i) {
    g.cells.push_back({StageEdge{i, StageOp::kSkipConnect}, StageEdge{i + 1, StageOp::kSkipConnect}});
  }
  return g;
}

std::vector<ValidationError> validate_cell(const CellGenotype& g) {
  std::vector<ValidationError> errors;
  if (g.nodes.empty()) errors.push_back({0, "cell has no intermediate nodes"});
  for (int k = 0; k < g.n_intermediate(); ++k) check_cell_node(g.nodes[static_cast<std::size_t>(k)], k, 0, errors);
  if (!g.nodes.empty()) check_cell_concat(g, 0, errors);
  return errors;
}

std::vector<ValidationError> validate_stage(const StageGenotype& g) {
  std::vector<ValidationError> errors;
  if (g.window < 2) errors.push_back({0, "window must be >= 2"});
  if (g.cells.empty()) errors.push_back({0, "stage has no cells"});
  for (int i = 0; i < g.retained(); ++i) {
    check_stage_cell(g.cells[static_cast<std::size_t>(i)], i, g.window, 0, errors);
  }
  return errors;
}

std::vector<ValidationError> validate_genotype(const Genotype& g) {
  std::vector<ValidationError> errors;
  if (g.normal.size() != 1 && g.normal.size() != 3) {
    errors.push_back({0, "expected 1 or 3 normal cells, got " + std::to_string(g.normal.size())});
  }
  if (g.reduction.size() != 1 && g.reduction.size() != 2) {
    errors.push_back({0, "expected 1 or 2 reduction cells, got " + std::to_string(g.reduction.size())});
  }
  std::optional<int> mult;
  auto check_cells = [&](const std::vector<CellGenotype>& cells, const char* kind) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (auto& e : validate_cell(cells[i])) {
        errors.push_back({0, std::string(kind) + " " + std::to_string(i) + ": " + e.message});
      }
      if (!mult) mult = cells[i].multiplier();
      if (cells[i].multiplier() != *mult) {
        errors.push_back({0, std::string(kind) + " " + std::to_string(i) + ": concat width " +
                                 std::to_string(cells[i].multiplier()) + " differs from " +
                                 std::to_string(*mult)});
      }
    }
  };
  check_cells(g.normal, "normal");
  check_cells(g.reduction, "reduction");
  for (int s = 0; s < 3; ++s) {
    if (g.cells_per_stage[static_cast<std::size_t>(s)] < 1) {
      errors.push_back({0, "cells_per_stage must be positive"});
    }
  }
  if (g.stages) {
    for (int s = 0; s < 3; ++s) {
      const StageGenotype& st = (*g.stages)[static_cast<std::size_t>(s)];
      for (auto& e : validate_stage(st)) {
        errors.push_back({0, "stage " + std::to_string(s) + ": " + e.message});
      }
      if (st.retained() != g.cells_per_stage[static_cast<std::size_t>(s)]) {
        errors.push_back({0, "stage " + std::to_string(s) + ": retained " + std::to_string(st.retained()) +
                                 " does not match cells_per_stage " +
                                 std::to_string(g.cells_per_stage[static_cast<std::size_t>(s)])});
      }
    }
  }
  if (g.init_channels < 1) errors.push_back({0, "init_channels must be positive"});
  if (g.num_classes < 2) errors.push_back({0, "num_classes must be >= 2"});
  return errors;
}

std::string serialize_cell(const CellGenotype& g) {
  std::string s;
  for (int k = 0; k < g.n_intermediate(); ++k) {
    const auto& e = g.nodes[static_cast<std::size_t>(k)];
    s += "node " + std::to_string(k) + ": (" + std::to_string(e[0].pred) + ", " +
         std::string(op_name(e[0].op)) + "), (" + std::to_string(e[1].pred) + ", " +
         std::string(op_name(e[1].op)) + ")\n";
  }
  s += "concat: " + join_ints(g.concat) + "\n";
  return s;
}

std::string serialize_stage(const StageGenotype& g) {
  std::string s = "window: " + std::to_string(g.window) + "\n";
  for (int i = 0; i < g.retained(); ++i) {
    const auto& e = g.cells[static_cast<std::size_t>(i)];
    s += "cell " + std::to_string(i) + ": (" + std::to_string(e[0].pred) + ", " +
         std::string(op_name(e[0].op)) + "), (" + std::to_string(e[1].pred) + ", " +
         std::string(op_name(e[1].op)) + ")\n";
  }
  const auto out = g.output();
  s += "output: (" + std::to_string(out[0]) + ", " + std::to_string(out[1]) + ")\n";
  s += "retained: " + std::to_string(g.retained()) + "\n";
  return s;
}

std::string serialize_genotype(const Genotype& g) {
  char src[17];
  std::snprintf(src, sizeof src, "%016llx", static_cast<unsigned long long>(g.source));
  std::string s = "hdas-genotype 1\n";
  s += "init_channels: " + std::to_string(g.init_channels) + "\n";
  s += "num_classes: " + std::to_string(g.num_classes) + "\n";
  s += "cells_per_stage: " +
       join_ints({g.cells_per_stage[0], g.cells_per_stage[1], g.cells_per_stage[2]}) + "\n";
  s += "source: " + std::string(src) + "\n";
  for (std::size_t i = 0; i < g.normal.size(); ++i) {
    s += "\nnormal " + std::to_string(i) + "\n" + serialize_cell(g.normal[i]);
  }
  for (std::size_t i = 0; i < g.reduction.size(); ++i) {
    s += "\nreduction " + std::to_string(i) + "\n" + serialize_cell(g.reduction[i]);
  }
  if (!g.stages) {
    s += "\nstages: chain\n";
  } else {
    for (std::size_t i = 0; i < 3; ++i) {
      s += "\nstage " + std::to_string(i) + "\n" + serialize_stage((*g.stages)[i]);
    }
  }
  return s;
}

ParseResult parse_genotype(const std::string& text) {
  ParseResult result;
  auto& errors = result.errors;
  Genotype g;
  g.normal.clear();
  g.reduction.clear();

  enum class Section { kHeader, kNormal, kReduction, kStage };
  Section section = Section::kHeader;
  CellGenotype* cell = nullptr;
  StageGenotype* stage = nullptr;
  std::array<StageGenotype, 3> stages;
  std::array<bool, 3> stage_seen{false, false, false};
  std::array<int, 3> stage_line{0, 0, 0};
  std::array<std::optional<int>, 3> stage_retained_decl;
  std::array<std::optional<std::array<int, 2>>, 3> stage_output_decl;
  bool chain = false;
  int chain_line = 0;
  bool saw_magic = false;
  std::vector<std::pair<CellGenotype*, int>> cell_headers;
  int stage_index = -1;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (!saw_magic) {
      if (line != "hdas-genotype 1") {
        errors.push_back({line_no, "expected header 'hdas-genotype 1'"});
        return result;
      }
      saw_magic = true;
      continue;
    }
    const std::size_t colon = line.find(':');
    const std::string head = trim(line.substr(0, colon == std::string::npos ? line.size() : colon));
    const std::string body = colon == std::string::npos ? "" : trim(line.substr(colon + 1));

    // Section headers.
    if (colon == std::string::npos) {
      std::istringstream hs(line);
      std::string kind;
      std::string idx_text;
      hs >> kind >> idx_text;
      const auto idx = parse_int(idx_text);
      if (kind == "normal" && idx && *idx == static_cast<int>(g.normal.size())) {
        g.normal.emplace_back();
        section = Section::kNormal;
        cell = nullptr;
        cell_headers.emplace_back(nullptr, line_no);
        continue;
      }
      if (kind == "reduction" && idx && *idx == static_cast<int>(g.reduction.size())) {
        g.reduction.emplace_back();
        section = Section::kReduction;
        cell = nullptr;
        cell_headers.emplace_back(nullptr, line_no);
        continue;
      }
      if (kind == "stage" && idx && *idx >= 0 && *idx < 3 && *idx == stage_index + 1) {
        stage_index = *idx;
        section = Section::kStage;
        stage = &stages[static_cast<std::size_t>(stage_index)];
        stage_seen[static_cast<std::size_t>(stage_index)] = true;
        stage_line[static_cast<std::size_t>(stage_index)] = line_no;
        continue;
      }
      errors.push_back({line_no, "unrecognized line '" + line + "'"});
      continue;
    }

    if (section == Section::kNormal || section == Section::kReduction) {
      cell = section == Section::kNormal ? &g.normal.back() : &g.reduction.back();
    }

    if (section == Section::kHeader || head == "stages") {
      if (head == "init_channels" || head == "num_classes") {
        auto v = parse_int(body);
        if (!v) {
          errors.push_back({line_no, head + ": expected integer"});
        } else {
          (head == "init_channels" ? g.init_channels : g.num_classes) = *v;
        }
      } else if (head == "cells_per_stage") {
        auto v = parse_int_list(body);
        if (!v || v->size() != 3) {
          errors.push_back({line_no, "cells_per_stage: expected three integers"});
        } else {
          g.cells_per_stage = {(*v)[0], (*v)[1], (*v)[2]};
        }
      } else if (head == "source") {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), v, 16);
        if (ec != std::errc() || p != body.data() + body.size()) {
          errors.push_back({line_no, "source: expected hex digits"});
        } else {
          g.source = v;
        }
      } else if (head == "stages") {
        if (body != "chain") {
          errors.push_back({line_no, "stages: only 'chain' is accepted here"});
        }
        chain = true;
        chain_line = line_no;
      } else {
        errors.push_back({line_no, "unknown header field '" + head + "'"});
      }
      continue;
    }

    if (section == Section::kNormal || section == Section::kReduction) {
      if (head.rfind("node ", 0) == 0) {
        auto k = parse_int(head.substr(5));
        if (!k || *k != cell->n_intermediate()) {
          errors.push_back({line_no, "node lines must be numbered consecutively from 0"});
          continue;
        }
        auto pairs = parse_pairs(body);
        if (!pairs || pairs->size() != 2) {
          errors.push_back({line_no, "node " + std::to_string(*k) + ": expected two (pred, op) records"});
          cell->nodes.push_back({});
          continue;
        }
        std::array<CellEdge, 2> edges{};
        bool ok = true;
        for (int e = 0; e < 2; ++e) {
          auto pred = parse_int((*pairs)[static_cast<std::size_t>(e)].first);
          auto op = parse_cell_op((*pairs)[static_cast<std::size_t>(e)].second);
          if (!pred) {
            errors.push_back({line_no, "node " + std::to_string(*k) + ": bad predecessor"});
            ok = false;
          }
          if (!op) {
            errors.push_back({line_no, "unknown operation '" + (*pairs)[static_cast<std::size_t>(e)].second + "'"});
            ok = false;
          }
          if (pred && op) edges[static_cast<std::size_t>(e)] = {*pred, *op};
        }
        if (ok) check_cell_node(edges, *k, line_no, errors);
        cell->nodes.push_back(edges);
      } else if (head == "concat") {
        auto v = parse_int_list(body);
        if (!v) {
          errors.push_back({line_no, "concat: expected a list of node indices"});
        } else {
          cell->concat = *v;
          check_cell_concat(*cell, line_no, errors);
        }
      } else {
        errors.push_back({line_no, "unknown cell field '" + head + "'"});
      }
      continue;
    }

    // Stage section.
    const std::size_t si = static_cast<std::size_t>(stage_index);
    if (head == "window") {
      auto v = parse_int(body);
      if (!v || *v < 2) {
        errors.push_back({line_no, "window: expected integer >= 2"});
      } else {
        stage->window = *v;
      }
    } else if (head.rfind("cell ", 0) == 0) {
      auto i = parse_int(head.substr(5));
      if (!i || *i != stage->retained()) {
        errors.push_back({line_no, "cell lines must be numbered consecutively from 0"});
        continue;
      }
      auto pairs = parse_pairs(body);
      if (!pairs || pairs->size() != 2) {
        errors.push_back({line_no, "cell " + std::to_string(*i) + ": expected two (pred, op) records"});
        stage->cells.push_back({});
        continue;
      }
      std::array<StageEdge, 2> edges{};
      bool ok = true;
      for (int e = 0; e < 2; ++e) {
        auto pred = parse_int((*pairs)[static_cast<std::size_t>(e)].first);
        auto op = parse_stage_op((*pairs)[static_cast<std::size_t>(e)].second);
        if (!pred) {
          errors.push_back({line_no, "cell " + std::to_string(*i) + ": bad predecessor"});
          ok = false;
        }
        if (!op) {
          errors.push_back({line_no, "unknown operation '" + (*pairs)[static_cast<std::size_t>(e)].second + "'"});
          ok = false;
        }
        if (pred && op) edges[static_cast<std::size_t>(e)] = {*pred, *op};
      }
      if (ok) check_stage_cell(edges, *i, stage->window, line_no, errors);
      stage->cells.push_back(edges);
    } else if (head == "output") {
      auto pairs = parse_pairs(body);
      std::optional<int> a, b;
      if (pairs && pairs->size() == 1) {
        a = parse_int((*pairs)[0].first);
        b = parse_int((*pairs)[0].second);
      }
      if (!a || !b) {
        errors.push_back({line_no, "output: expected (a, b)"});
      } else {
        stage_output_decl[si] = std::array<int, 2>{*a, *b};
        const auto expect = stage->output();
        if (*a != expect[0] || *b != expect[1]) {
          errors.push_back({line_no, "output (" + std::to_string(*a) + ", " + std::to_string(*b) +
                                         ") must be the last two cells (" + std::to_string(expect[0]) +
                                         ", " + std::to_string(expect[1]) + ")"});
        }
      }
    } else if (head == "retained") {
      auto v = parse_int(body);
      if (!v) {
        errors.push_back({line_no, "retained: expected integer"});
      } else {
        stage_retained_decl[si] = *v;
        if (*v != stage->retained()) {
          errors.push_back({line_no, "retained " + std::to_string(*v) + " but " +
                                         std::to_string(stage->retained()) + " cell lines"});
        }
      }
    } else {
      errors.push_back({line_no, "unknown stage field '" + head + "'"});
    }
  }

  if (!saw_magic) {
    errors.push_back({1, "expected header 'hdas-genotype 1'"});
    return result;
  }

  // Whole-document checks, reported at the relevant section header.
  std::size_t header_pos = 0;
  auto check_cells = [&](std::vector<CellGenotype>& cells, const char* kind) {
    for (std::size_t i = 0; i < cells.size(); ++i, ++header_pos) {
      const int ln = cell_headers[header_pos].second;
      if (cells[i].nodes.empty()) errors.push_back({ln, std::string(kind) + " " + std::to_string(i) + ": no nodes"});
      if (cells[i].concat.empty()) errors.push_back({ln, std::string(kind) + " " + std::to_string(i) + ": missing concat"});
    }
  };
  check_cells(g.normal, "normal");
  check_cells(g.reduction, "reduction");
  if (g.normal.size() != 1 && g.normal.size() != 3) {
    errors.push_back({0, "expected 1 or 3 normal cells, got " + std::to_string(g.normal.size())});
  }
  if (g.reduction.size() != 1 && g.reduction.size() != 2) {
    errors.push_back({0, "expected 1 or 2 reduction cells, got " + std::to_string(g.reduction.size())});
  }
  const bool any_stage = stage_seen[0] || stage_seen[1] || stage_seen[2];
  if (chain && any_stage) errors.push_back({chain_line, "both 'stages: chain' and stage sections present"});
  if (!chain && !(stage_seen[0] && stage_seen[1] && stage_seen[2])) {
    errors.push_back({0, "expected 'stages: chain' or three stage sections"});
  }
  if (any_stage) {
    for (std::size_t s = 0; s < 3; ++s) {
      if (!stage_seen[s]) continue;
      if (!stage_retained_decl[s]) errors.push_back({stage_line[s], "stage " + std::to_string(s) + ": missing retained"});
      if (!stage_output_decl[s]) errors.push_back({stage_line[s], "stage " + std::to_string(s) + ": missing output"});
      if (stages[s].cells.empty()) errors.push_back({stage_line[s], "stage " + std::to_string(s) + ": no cells"});
      if (stages[s].retained() != g.cells_per_stage[s]) {
        errors.push_back({stage_line[s], "stage " + std::to_string(s) + ": retained " +
                                             std::to_string(stages[s].retained()) +
                                             " does not match cells_per_stage " +
                                             std::to_string(g.cells_per_stage[s])});
      }
    }
    g.stages = stages;
  }
  if (errors.empty()) {
    for (auto& e : validate_genotype(g)) errors.push_back(e);
  }
  if (errors.empty()) result.genotype = std::move(g);
  return result;
}

std::string genotype_hash(const Genotype& g) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_genotype(g))));
  return buf;
}

}  // namespace hdas
