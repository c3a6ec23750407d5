#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdas/autodiff.hpp"

namespace hdas {

struct GradCheckCase {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckReport report;
};

/// Finite-difference check of every differentiable op, with respect to each
/// of its tensor inputs, plus the depth and complexity losses, on random
/// inputs drawn from each seed.
std::vector<GradCheckCase> run_gradient_suite(const std::vector<std::uint64_t>& seeds, double tol = 1e-4);

/// One line per case plus a summary line.
std::string format_gradient_suite(const std::vector<GradCheckCase>& cases, double tol = 1e-4);

}  // namespace hdas
