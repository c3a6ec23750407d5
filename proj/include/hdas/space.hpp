#pragma once

#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace hdas {

using BigInt = boost::multiprecision::cpp_int;

enum class SpaceKind { kCell, kStage, kDistribution };

/// Symbolic search space. For cells `n_nodes` counts intermediate nodes; for
/// stages it counts cells (the maximum count in distribution search).
struct SearchSpaceSpec {
  SpaceKind kind = SpaceKind::kCell;
  int n_nodes = 4;
  int n_ops = 7;        // non-zero candidate ops
  int window_m = 0;     // 0 = unconstrained
  int n_min = 4;        // distribution only
  int n_instances = 1;  // independent copies multiplied together
};

/// Exact count without graph-isomorphism reduction: per node k (1-indexed),
/// C(available, 2) * n_ops^2 with available = k + 1 (clipped to the window).
/// Distribution spaces sum the per-retained-count products over
/// [n_min, n_nodes]. The result is raised to n_instances.
BigInt count_space(const SearchSpaceSpec& spec);

/// log10 of a positive integer, computed from its decimal digits.
double log10_big(const BigInt& v);

/// Count for a single cell with n_intermediate nodes and n_ops non-zero ops.
BigInt count_cell_space(int n_intermediate, int n_ops);

struct MagnitudeEntry {
  std::string name;
  std::string formula;
  BigInt exact;
  double log10 = 0.0;
  int quoted_exponent = 0;
  bool pass = false;
};

struct MagnitudeReport {
  std::vector<MagnitudeEntry> entries;
  bool all_pass = false;
};

/// Recomputes every quoted search-space size exactly and checks
/// |log10(exact) - quoted exponent| <= 1.
MagnitudeReport verify_magnitudes();

std::string format_report(const MagnitudeReport& report);

}  // namespace hdas
