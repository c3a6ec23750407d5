#include "hdas/space.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hdas/error.hpp"

namespace hdas {

namespace {

BigInt choose2(int n) { return BigInt(n) * (n - 1) / 2; }

BigInt product_up_to(const SearchSpaceSpec& spec, int nodes) {
  BigInt total = 1;
  const BigInt ops_sq = BigInt(spec.n_ops) * spec.n_ops;
  for (int k = 1; k <= nodes; ++k) {
    int available = k + 1;
    if (spec.window_m > 0) available = std::min(available, spec.window_m);
    total *= choose2(available) * ops_sq;
  }
  return total;
}

}  // namespace

BigInt count_space(const SearchSpaceSpec& spec) {
  if (spec.n_nodes < 1 || spec.n_ops < 1 || spec.n_instances < 1 || spec.window_m < 0) {
    fail(ErrorKind::kInvalidArgument, "count_space: counts must be positive");
  }
  if (spec.window_m == 1) fail(ErrorKind::kInvalidArgument, "count_space: window must be >= 2");
  if (spec.kind == SpaceKind::kCell && spec.window_m != 0) {
    fail(ErrorKind::kInvalidArgument, "count_space: cells have no window");
  }
  BigInt one;
  if (spec.kind == SpaceKind::kDistribution) {
    if (spec.n_min < 1 || spec.n_min > spec.n_nodes) {
      fail(ErrorKind::kInvalidArgument, "count_space: n_min must lie in [1, n_cells]");
    }
    one = 0;
    for (int r = spec.n_min; r <= spec.n_nodes; ++r) one += product_up_to(spec, r);
  } else {
    one = product_up_to(spec, spec.n_nodes);
  }
  return boost::multiprecision::pow(one, static_cast<unsigned>(spec.n_instances));
}

double log10_big(const BigInt& v) {
  if (v <= 0) fail(ErrorKind::kInvalidArgument, "log10_big: value must be positive");
  const std::string digits = v.str();
  const std::size_t lead = std::min<std::size_t>(digits.size(), 17);
  const double mantissa = std::stod(digits.substr(0, lead));
  return std::log10(mantissa) + static_cast<double>(digits.size() - lead);
}

BigInt count_cell_space(int n_intermediate, int n_ops) {
  return count_space({SpaceKind::kCell, n_intermediate, n_ops, 0, 0, 1});
}

MagnitudeReport verify_magnitudes() {
  // Cell level: 4 intermediate nodes, 7 non-zero ops. Stage level: 3
  // non-zero ops, 6 cells (8 in distribution search), window 3, n_min 4.
  const BigInt cell = count_space({SpaceKind::kCell, 4, 7, 0, 0, 1});
  const BigInt stage_free = count_space({SpaceKind::kStage, 6, 3, 0, 0, 1});
  const BigInt stages_win = count_space({SpaceKind::kStage, 6, 3, 3, 0, 3});
  const BigInt dist_free = count_space({SpaceKind::kDistribution, 8, 3, 0, 4, 1});
  const BigInt dist_free_net = count_space({SpaceKind::kDistribution, 8, 3, 0, 4, 3});
  const BigInt dist_win_net = count_space({SpaceKind::kDistribution, 8, 3, 3, 4, 3});

  MagnitudeReport report;
  auto add = [&](std::string name, std::string formula, BigInt exact, int exponent) {
    MagnitudeEntry e;
    e.name = std::move(name);
    e.formula = std::move(formula);
    e.exact = std::move(exact);
    e.log10 = log10_big(e.exact);
    e.quoted_exponent = exponent;
    e.pass = std::abs(e.log10 - exponent) <= 1.0;
    report.entries.push_back(std::move(e));
  };
  add("single cell", "prod_{k=1..4} C(k+1,2)*7^2", cell, 9);
  add("shared normal+reduction cells", "cell^2", cell * cell, 18);
  add("stage-specific cells (3 normal + 2 reduction)", "cell^5", boost::multiprecision::pow(cell, 5), 45);
  add("single stage, unconstrained", "prod_{k=1..6} C(k+1,2)*3^2", stage_free, 10);
  add("three stages, window 3", "(prod_{k=1..6} C(min(k+1,3),2)*3^2)^3", stages_win, 24);
  add("20-cell network, stages + cells", "stages(window 3)^3 * cell^2", stages_win * cell * cell, 42);
  add("distribution, single stage, unconstrained", "sum_{r=4..8} prod_{k=1..r} C(k+1,2)*3^2",
      dist_free, 15);
  add("distribution, three stages, unconstrained", "(sum_{r=4..8} ...)^3", dist_free_net, 45);
  add("distribution, three stages, window 3", "(sum_{r=4..8} prod C(min(k+1,3),2)*3^2)^3",
      dist_win_net, 33);
  add("distribution + cells", "distribution(window 3)^3 * cell^2", dist_win_net * cell * cell, 51);
  report.all_pass = std::all_of(report.entries.begin(), report.entries.end(),
                                [](const MagnitudeEntry& e) { return e.pass; });
  return report;
}

std::string format_report(const MagnitudeReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-48s %10s %8s %8s  %s\n", "space", "log10", "quoted", "delta", "status");
  out += buf;
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof buf, "%-48s %10.3f %8d %8.3f  %s\n", e.name.c_str(), e.log10,
                  e.quoted_exponent, e.log10 - e.quoted_exponent, e.pass ? "pass" : "FAIL");
    out += buf;
  }
  for (const auto& e : report.entries) {
    out += "  " + e.name + " = " + e.formula + " = " + e.exact.str() + "\n";
  }
  out += report.all_pass ? "all spaces within 1.0 decade\n" : "some spaces outside 1.0 decade\n";
  return out;
}

}  // namespace hdas
