#include <cmath>

#include "doctest.h"
#include "hdas/error.hpp"
#include "hdas/stage.hpp"
#include "oracles.hpp"

using namespace hdas;

namespace {

Var constant(Graph& g, const Tensor& t) { return g.constant(t); }

/// Logits that put all mass on one op of every edge: `skip` on the edge
/// from the immediate predecessor, `none` everywhere else.
Tensor chain_logits(const StageSpec& spec) {
  Tensor a({spec.n_edges(), kNumStageOps}, -1000.0);
  for (int c = 0; c < spec.n_cells; ++c) {
    for (int j = spec.window_begin(c); j < c + 2; ++j) {
      const int op = j == c + 1 ? static_cast<int>(StageOp::kSkipConnect) : static_cast<int>(StageOp::kNone);
      a[static_cast<std::size_t>(spec.edge_index(c, j) * kNumStageOps + op)] = 1000.0;
    }
  }
  return a;
}

}  // namespace

TEST_SUITE("stage") {
  TEST_CASE("edge table layout") {
    const StageSpec spec{5, 3, 2};
    CHECK(spec.n_edges() == 2 + 3 + 3 + 3 + 3);
    CHECK(spec.window_begin(0) == 0);
    CHECK(spec.window_begin(3) == 2);
    CHECK(spec.edge_index(0, 1) == 1);
    CHECK(spec.edge_index(1, 0) == 2);
    CHECK(spec.edge_index(4, 5) == 13);
    CHECK_THROWS_AS(spec.edge_index(3, 1), Error);
    for (int c = 0; c < spec.n_cells; ++c) {
      for (int j = spec.window_begin(c); j < c + 2; ++j) CHECK(spec.edge_index(c, j) == oracle::edge_row(c, j, 3));
    }
  }

  TEST_CASE("two-cell chain has depth loss -1") {
    const StageSpec spec{2, 2, 2};
    Graph g;
    Var loss = depth_loss({constant(g, chain_logits(spec))}, {std::nullopt}, {spec});
    CHECK(loss.value().item() == -1.0);
    const auto d = depth_numbers(chain_logits(spec), spec);
    CHECK(d == std::vector<double>{0.0, 0.0, 1.0, 2.0});
  }

  TEST_CASE("chain depth numbers count cells") {
    for (int n = 2; n <= 7; ++n) {
      const StageSpec spec{n, n + 1, 2};
      const auto d = depth_numbers(chain_logits(spec), spec);
      for (int c = 0; c < n; ++c) CHECK(d[static_cast<std::size_t>(c + 2)] == c + 1);
    }
  }

  TEST_CASE("depth loss matches the expanded recursion on random tables") {
    Rng rng(2024);
    int checked = 0;
    for (int trial = 0; trial < 600; ++trial) {
      const int n_stages = 1 + rng.uniform_int(3);
      const bool normalize = rng.uniform() < 0.75;
      const bool with_beta = rng.uniform() < 0.5;
      std::vector<StageSpec> specs;
      std::vector<Tensor> alphas;
      std::vector<std::optional<Tensor>> betas;
      Graph g;
      std::vector<Var> alpha_vars;
      std::vector<std::optional<Var>> beta_vars;
      for (int s = 0; s < n_stages; ++s) {
        const int n = 2 + rng.uniform_int(5);                   // 2..6 cells
        const int window = std::min(n + 1, 2 + rng.uniform_int(6));  // 2..7
        const int n_min = 2 + rng.uniform_int(n - 1);
        specs.push_back({n, window, n_min});
        alphas.push_back(oracle::random_alpha(rng, specs.back()));
        alpha_vars.push_back(g.constant(alphas.back()));
        if (with_beta) {
          Tensor b({specs.back().n_pairs()});
          for (double& v : b.data()) v = rng.normal();
          betas.push_back(b);
          beta_vars.push_back(g.constant(b));
        } else {
          betas.push_back(std::nullopt);
          beta_vars.push_back(std::nullopt);
        }
      }
      const double got = depth_loss(alpha_vars, beta_vars, specs, normalize).value().item();
      const double want = oracle::depth_loss(alphas, betas, specs, normalize);
      CHECK(std::abs(got - want) <= 1e-10);
      ++checked;
    }
    CHECK(checked >= 500);
  }

  TEST_CASE("beta weighting scales the term of the cell that closes each pair") {
    // Uniform edges, N = 4, n_min = 2: pairs end at cells 2, 3 and 4.
    const StageSpec spec{4, 5, 2};
    const Tensor alpha({spec.n_edges(), kNumStageOps}, 0.0);
    const auto d = depth_numbers(alpha, spec);
    Tensor beta({3}, {0.0, 0.0, 0.0});
    Graph g;
    const double got = depth_loss({g.constant(alpha)}, {g.constant(beta)}, {spec}).value().item();
    double want = 0.0;
    for (int i = 1; i <= 4; ++i) {
      const double factor = i >= 2 ? 1.0 + i / 3.0 : 1.0;
      want -= d[static_cast<std::size_t>(i + 1)] / i * factor;
    }
    CHECK(got == doctest::Approx(want / 4).epsilon(1e-14));
  }

  TEST_CASE("complexity loss") {
    SUBCASE("uniform beta, N = 8, n_min = 4 gives 6 per stage") {
      Graph g;
      std::vector<Var> betas;
      for (int s = 0; s < 3; ++s) betas.push_back(g.constant(Tensor({5}, 0.0)));
      const double v = complexity_loss(betas, {1.0, 1.0, 1.0}, 4).value().item();
      CHECK(std::abs(v - 18.0) <= 3e-12);
      const double one = complexity_loss({betas[0]}, {1.0}, 4).value().item();
      CHECK(std::abs(one - 6.0) <= 1e-12);
    }
    SUBCASE("a single pair costs exactly n_min") {
      Graph g;
      CHECK(complexity_loss({g.constant(Tensor({1}, {0.37}))}, {1.0}, 4).value().item() == 4.0);
    }
    SUBCASE("theta weights each stage") {
      Graph g;
      const double v =
          complexity_loss({g.constant(Tensor({1}, 0.0)), g.constant(Tensor({1}, 0.0))}, {2.0, 0.5}, 3).value().item();
      CHECK(v == 7.5);
    }
    SUBCASE("non-positive theta is rejected") {
      Graph g;
      CHECK_THROWS_AS(complexity_loss({g.constant(Tensor({2}, 0.0))}, {0.0}, 3), Error);
    }
  }

  TEST_CASE("dead cells and stage depth agree with path enumeration") {
    Rng rng(77);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 1 + rng.uniform_int(6);
      const int window = 2 + rng.uniform_int(n);  // 2..n+1
      const StageGenotype g = oracle::random_stage(rng, n, window);
      REQUIRE(validate_stage(g).empty());
      if (dead_cells(g) != oracle::dead_cells(g)) ++mismatches;
      if (stage_depth(g) != oracle::stage_depth(g)) ++mismatches;
    }
    CHECK(mismatches == 0);
  }

  TEST_CASE("dead cells of a hand-built stage") {
    // Cells 0 and 1 read the inputs, cells 2 and 3 read the inputs as well:
    // only cells 2 and 3 (the outputs) are live.
    StageGenotype g;
    g.window = 5;
    for (int c = 0; c < 4; ++c) {
      g.cells.push_back({StageEdge{0, StageOp::kSkipConnect}, StageEdge{1, StageOp::kMaxPool3x3}});
    }
    CHECK(dead_cells(g) == std::set<int>{0, 1});
    CHECK(stage_depth(g) == 1);
    CHECK(dead_cells(chain_stage(3, 4)).empty());
    // Cell 1 feeds nobody; the outputs (cells 2, 3) read cell 0 and inputs.
    StageGenotype h;
    h.window = 5;
    h.cells = {{StageEdge{0, StageOp::kSkipConnect}, StageEdge{1, StageOp::kSkipConnect}},
               {StageEdge{0, StageOp::kSkipConnect}, StageEdge{2, StageOp::kSkipConnect}},
               {StageEdge{1, StageOp::kAvgPool3x3}, StageEdge{2, StageOp::kSkipConnect}},
               {StageEdge{0, StageOp::kMaxPool3x3}, StageEdge{2, StageOp::kSkipConnect}}};
    CHECK(dead_cells(h) == std::set<int>{1});
    CHECK(stage_depth(chain_stage(6, 3)) == 6);
    CHECK(stage_depth(chain_stage(3, 4)) == 3);
  }

  TEST_CASE("derive_stage keeps the strongest window edges") {
    const StageSpec spec{3, 3, 2};
    Tensor alpha({spec.n_edges(), kNumStageOps}, 0.0);
    auto set = [&](int cell, int pred, StageOp op, double v) {
      alpha[static_cast<std::size_t>(spec.edge_index(cell, pred) * kNumStageOps + static_cast<int>(op))] = v;
    };
    set(2, 3, StageOp::kMaxPool3x3, 3.0);
    set(2, 2, StageOp::kAvgPool3x3, 2.0);
    set(2, 2, StageOp::kNone, 9.0);  // none never counts toward strength
    set(2, 1, StageOp::kSkipConnect, 1.0);
    const StageGenotype g = derive_stage(alpha, spec, 3);
    CHECK(g.cells[2][0].pred == 1);
    CHECK(g.cells[2][0].op == StageOp::kSkipConnect);
    CHECK(g.cells[2][1].pred == 3);
    CHECK(g.cells[2][1].op == StageOp::kMaxPool3x3);
    // Ties resolve to the lower predecessor and the lower op.
    CHECK(g.cells[0][0].pred == 0);
    CHECK(g.cells[0][0].op == StageOp::kAvgPool3x3);
    CHECK(derive_stage(alpha, spec, 2).retained() == 2);
    CHECK_THROWS_AS(derive_stage(alpha, spec, 4), Error);
  }

  TEST_CASE("derive_distribution picks the argmax pair, ties toward fewer cells") {
    CHECK(derive_distribution({Tensor({5}, {0, 0, 0, 0, 1})}, 4) == std::vector<int>{8});
    CHECK(derive_distribution({Tensor({5}, 0.0)}, 4) == std::vector<int>{4});
    CHECK(derive_distribution({Tensor({5}, {3, 1, 1, 1, 1})}, 4) == std::vector<int>{4});
    CHECK(derive_distribution({Tensor({3}, {0.1, 0.5, 0.5}), Tensor({3}, 0.0)}, 4) == std::vector<int>{5, 4});
  }

  TEST_CASE("consecutive skip logits derive a chain") {
    const StageSpec spec{6, 3, 2};
    const StageGenotype g = derive_stage(chain_logits(spec), spec, 6);
    CHECK(stage_depth(g) == 6);
    CHECK(dead_cells(g).empty());
    for (int c = 0; c < 6; ++c) {
      CHECK(g.cells[static_cast<std::size_t>(c)][1].pred == c + 1);
      CHECK(g.cells[static_cast<std::size_t>(c)][1].op == StageOp::kSkipConnect);
    }
  }

  TEST_CASE("derive_stage is shift invariant and respects the window") {
    Rng rng(5);
    for (int trial = 0; trial < 120; ++trial) {
      const int n = 2 + rng.uniform_int(7);
      const StageSpec spec{n, std::min(3, n + 1), 2};
      Tensor alpha = oracle::random_alpha(rng, spec);
      const int retained = 1 + rng.uniform_int(n);
      const StageGenotype g = derive_stage(alpha, spec, retained);
      CHECK(validate_stage(g).empty());
      CHECK(g.retained() == retained);
      Tensor shifted = alpha;
      for (double& v : shifted.data()) v += 3.25;
      CHECK(derive_stage(shifted, spec, retained) == g);
    }
  }

  TEST_CASE("stage forward in chain mode feeds each cell its predecessor") {
    Graph g;
    Var a = g.constant(Tensor({1, 1, 1, 1}, {1.0}));
    Var b = g.constant(Tensor({1, 1, 1, 1}, {2.0}));
    const StageSpec spec{3, 4, 2};
    std::vector<double> seen;
    auto cell = [&](int, Var x) {
      seen.push_back(x.value()[0]);
      return scale(x, 10.0);
    };
    StageOutput out = stage_forward({a, b}, spec, std::nullopt, std::nullopt, cell, StageMode::kChain);
    CHECK(seen == std::vector<double>{2.0, 20.0, 200.0});
    CHECK(out.first.value()[0] == 200.0);
    CHECK(out.second.value()[0] == 2000.0);
  }

  TEST_CASE("stage validation names the cell and window") {
    StageGenotype g = chain_stage(4, 2);
    g.cells[3][0].pred = 1;
    const auto errors = validate_stage(g);
    REQUIRE(!errors.empty());
    CHECK(errors[0].message.find("cell 3") != std::string::npos);
    CHECK(errors[0].message.find("window") != std::string::npos);
  }
}
