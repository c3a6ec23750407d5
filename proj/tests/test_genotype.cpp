#include <regex>

#include "doctest.h"
#include "hdas/cell.hpp"
#include "hdas/dot.hpp"
#include "hdas/error.hpp"
#include "hdas/eval.hpp"
#include "hdas/space.hpp"
#include "oracles.hpp"

using namespace hdas;

namespace {

BigInt binom2(int n) { return BigInt(n) * (n - 1) / 2; }

// Product over cells of C(available, 2) * ops^2, written out directly.
BigInt brute_product(int n_nodes, int ops, int window) {
  BigInt total = 1;
  for (int k = 1; k <= n_nodes; ++k) {
    const int available = window > 0 ? std::min(k + 1, window) : k + 1;
    total *= binom2(available) * ops * ops;
  }
  return total;
}

// Enumerates every discrete stage with `n` cells (window w) and counts them.
long enumerate_stages(int n, int window) {
  long count = 1;
  for (int c = 0; c < n; ++c) {
    const int lo = std::max(0, c + 2 - window);
    long per = 0;
    for (int a = lo; a < c + 2; ++a) {
      for (int b = a + 1; b < c + 2; ++b) per += 9;
    }
    count *= per;
  }
  return count;
}

int count_matches(const std::string& text, const std::string& pattern) {
  const std::regex re(pattern);
  return static_cast<int>(std::distance(std::sregex_iterator(text.begin(), text.end(), re), std::sregex_iterator()));
}

}  // namespace

TEST_SUITE("genotype") {
  TEST_CASE("search space anchors") {
    CHECK(count_cell_space(4, 7) == BigInt(1037664180));
    SearchSpaceSpec stages{SpaceKind::kStage, 6, 3, 3, 4, 3};
    CHECK(count_space(stages) == BigInt(129140163) * 129140163 * 129140163);
    CHECK(count_space({SpaceKind::kCell, 1, 1, 0, 4, 1}) == 1);
    CHECK(count_space({SpaceKind::kStage, 1, 1, 0, 4, 1}) == 1);
    CHECK(log10_big(BigInt(1000)) == doctest::Approx(3.0));
    CHECK_THROWS_AS(count_space({SpaceKind::kStage, 3, 3, 1, 2, 1}), Error);
  }

  TEST_CASE("space counts agree with direct products and enumeration") {
    for (int n = 1; n <= 6; ++n) {
      for (int ops : {1, 3, 7}) {
        CHECK(count_space({SpaceKind::kCell, n, ops, 0, 1, 1}) == brute_product(n, ops, 0));
      }
      for (int window : {2, 3, 4}) {
        CHECK(count_space({SpaceKind::kStage, n, 3, window, 1, 1}) == enumerate_stages(n, window));
      }
    }
    BigInt sum = 0;
    for (int r = 3; r <= 6; ++r) sum += brute_product(r, 3, 3);
    CHECK(count_space({SpaceKind::kDistribution, 6, 3, 3, 3, 2}) == sum * sum);
  }

  TEST_CASE("op names round-trip") {
    for (int o = 0; o < kNumCellOps; ++o) CHECK(parse_cell_op(op_name(static_cast<CellOp>(o))) == static_cast<CellOp>(o));
    for (int o = 0; o < kNumStageOps; ++o) {
      CHECK(parse_stage_op(op_name(static_cast<StageOp>(o))) == static_cast<StageOp>(o));
    }
    CHECK(op_name(CellOp::kSepConv3x3) == "sep_conv_3x3");
    CHECK(op_name(StageOp::kNone) == "none");
    CHECK_FALSE(parse_cell_op("max_pool_5x5"));
    CHECK_FALSE(parse_stage_op("sep_conv_3x3"));
    CHECK(none_index(kNumCellOps) == 7);
    CHECK(none_index(kNumStageOps) == 3);
  }

  TEST_CASE("random and derived genotypes round-trip") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      RandomGenotypeSpec spec;
      spec.n_normal = seed % 2 ? 3 : 1;
      spec.n_reduction = seed % 2 ? 2 : 1;
      spec.cells_per_stage = {2 + static_cast<int>(seed % 3), 3, 2 + static_cast<int>(seed % 5)};
      Genotype g = sample_random_genotype(spec, seed);
      if (seed % 4 == 0) g.stages.reset();
      REQUIRE(validate_genotype(g).empty());
      const std::string text = serialize_genotype(g);
      const ParseResult parsed = parse_genotype(text);
      REQUIRE(parsed.errors.empty());
      CHECK(*parsed.genotype == g);
      CHECK(serialize_genotype(*parsed.genotype) == text);
      CHECK(genotype_hash(*parsed.genotype) == genotype_hash(g));
    }
    Rng rng(9);
    Tensor alpha({CellSpec{4, 4, false}.n_edges(), kNumCellOps});
    for (double& v : alpha.data()) v = rng.normal();
    Genotype g = sample_random_genotype({}, 1);
    g.normal = {derive_cell(alpha, 4, 4)};
    g.reduction = {derive_cell(alpha, 4, 4)};
    const ParseResult parsed = parse_genotype(serialize_genotype(g));
    REQUIRE(parsed.errors.empty());
    CHECK(*parsed.genotype == g);
  }

  TEST_CASE("parse errors carry line numbers") {
    Genotype g = sample_random_genotype({}, 5);
    std::string text = serialize_genotype(g);
    SUBCASE("unknown operation") {
      const auto pos = text.find("node 1:");
      const int line = static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n')) + 1;
      const auto eol = text.find('\n', pos);
      text.replace(pos, eol - pos, "node 1: (0, max_pool_5x5), (1, skip_connect)");
      const ParseResult r = parse_genotype(text);
      CHECK_FALSE(r.genotype);
      REQUIRE(r.errors.size() == 1);
      CHECK(r.errors[0].line == line);
      CHECK(r.errors[0].message.find("max_pool_5x5") != std::string::npos);
    }
    SUBCASE("stage predecessor outside the window") {
      g.cells_per_stage = {4, 2, 2};
      (*g.stages)[0] = chain_stage(4, 3);
      text = serialize_genotype(g);
      const auto pos = text.find("cell 3:");
      const int line = static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n')) + 1;
      const auto eol = text.find('\n', pos);
      text.replace(pos, eol - pos, "cell 3: (1, skip_connect), (4, avg_pool_3x3)");
      const ParseResult r = parse_genotype(text);
      CHECK_FALSE(r.genotype);
      REQUIRE_FALSE(r.errors.empty());
      CHECK(r.errors[0].line == line);
      CHECK(r.errors[0].message.find("cell 3") != std::string::npos);
      CHECK(r.errors[0].message.find("window") != std::string::npos);
    }
    SUBCASE("none and duplicate predecessors") {
      CellGenotype c = g.normal[0];
      c.nodes[0][0].op = CellOp::kNone;
      CHECK_FALSE(validate_cell(c).empty());
      c = g.normal[0];
      c.nodes[2][1].pred = c.nodes[2][0].pred;
      CHECK_FALSE(validate_cell(c).empty());
    }
  }

  TEST_CASE("derive_cell keeps the two strongest edges per node") {
    Tensor alpha({CellSpec{2, 2, false}.n_edges(), kNumCellOps}, 0.0);
    auto set = [&](int node, int pred, CellOp op, double v) {
      alpha[static_cast<std::size_t>(cell_edge_index(node, pred) * kNumCellOps + static_cast<int>(op))] = v;
    };
    set(0, 1, CellOp::kDilConv5x5, 2.0);
    set(1, 2, CellOp::kSepConv3x3, 3.0);
    set(1, 0, CellOp::kNone, 8.0);
    set(1, 1, CellOp::kMaxPool3x3, 1.0);
    const CellGenotype g = derive_cell(alpha, 2, 2);
    CHECK(g.nodes[0][0] == CellEdge{0, CellOp::kSepConv3x3});  // uniform row: lowest op index
    CHECK(g.nodes[0][1] == CellEdge{1, CellOp::kDilConv5x5});
    CHECK(g.nodes[1][0] == CellEdge{1, CellOp::kMaxPool3x3});
    CHECK(g.nodes[1][1] == CellEdge{2, CellOp::kSepConv3x3});
    CHECK(g.concat == std::vector<int>{2, 3});
  }

  TEST_CASE("parameter counts of single operations") {
    const int c = 6;
    const auto sep = [](int c, int k) { return 2 * (c * k * k + c * c + 2 * c); };
    const auto dil = [](int c, int k) { return c * k * k + c * c + 2 * c; };
    const std::array<int, 7> want{sep(c, 3), sep(c, 5), dil(c, 3), dil(c, 5), 2 * c, 2 * c, 0};
    for (int o = 0; o < 7; ++o) {
      ParamStore store(1);
      auto op = make_cell_op(static_cast<CellOp>(o), store, "op", c, 1);
      CHECK(op != nullptr);
      CHECK(static_cast<int>(store.numel()) == want[static_cast<std::size_t>(o)]);
    }
    ParamStore store(1);
    make_cell_op(CellOp::kSkipConnect, store, "fr", c, 2);
    CHECK(static_cast<int>(store.numel()) == 2 * c * (c / 2) + 2 * c);
    CHECK(make_cell_op(CellOp::kNone, store, "none", c, 1) == nullptr);
  }

  TEST_CASE("parameter count of a chain genotype network") {
    // Every edge is sep_conv_3x3 from the two cell inputs.
    CellGenotype cell;
    const int n = 3, m = 2;
    for (int k = 0; k < n; ++k) cell.nodes.push_back({CellEdge{0, CellOp::kSepConv3x3}, CellEdge{1, CellOp::kSepConv3x3}});
    cell.concat = {3, 4};
    Genotype g;
    g.normal = {cell};
    g.reduction = {cell};
    g.cells_per_stage = {2, 3, 1};
    g.init_channels = 4;
    g.num_classes = 5;
    const int c0 = g.init_channels;
    const auto sep = [](int c) { return 2 * (9 * c + c * c + 2 * c); };
    const auto preprocess = [](int in, int out) { return in * out + 2 * out; };
    long want = 3 * 9 * m * c0 + 2 * m * c0;  // stem
    for (int s = 0; s < 3; ++s) {
      const int cs = c0 << s;
      want += g.cells_per_stage[static_cast<std::size_t>(s)] * (2 * preprocess(m * cs, cs) + 2 * n * sep(cs));
    }
    for (int r = 0; r < 2; ++r) {
      const int in = m * (c0 << r), cs = c0 << (r + 1);
      want += 2 * preprocess(in, cs) + 2 * n * sep(cs);
      want += 2 * in * (m * cs / 2) + 2 * m * cs;  // factorized skip to the next stage
    }
    want += 2 * m * (c0 << 2) * g.num_classes + g.num_classes;
    auto net = build_network(g, 3);
    CHECK(static_cast<long>(net->num_weights()) == want);
  }

  TEST_CASE("dot export") {
    Genotype g = sample_random_genotype({}, 11);
    CHECK(export_dot(g) == export_dot(g));
    SUBCASE("chain stage of three") {
      const std::string dot = chain_to_dot(3, "stage0");
      CHECK(count_matches(dot, R"(-> \w+ \[label="skip_connect"\])") == 3);
      CHECK(count_matches(dot, R"(class="output")") == 1);
      CHECK(count_matches(dot, "->") == 5);
      g.stages.reset();
      g.cells_per_stage = {3, 3, 3};
      CHECK(count_matches(export_dot(g), R"(class="output")") == 5 + 3);
    }
    SUBCASE("dead cells are dashed") {
      StageGenotype st;
      st.window = 5;
      for (int c = 0; c < 4; ++c) st.cells.push_back({StageEdge{0, StageOp::kSkipConnect}, StageEdge{1, StageOp::kMaxPool3x3}});
      const std::string dot = stage_to_dot(st, "s");
      CHECK(count_matches(dot, "dashed") == 2);
    }
  }
}
