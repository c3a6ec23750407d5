#include <cmath>
#include <sstream>

#include "doctest.h"
#include "hdas/error.hpp"
#include "hdas/eval.hpp"
#include "hdas/search.hpp"
#include "oracles.hpp"

using namespace hdas;

namespace {

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

const Dataset& tiny_data() {
  static const Dataset d = make_toy_dataset({8, 96, 32, 0.1, 4}).first;
  return d;
}

SearchConfig tiny_search(SearchPhase phase) {
  SearchConfig c;
  c.phase = phase;
  c.epochs = 2;
  c.batch_size = 16;
  c.init_channels = 2;
  c.n_intermediate = 2;
  c.multiplier = 2;
  c.cells_per_stage = {2, 2, 2};
  c.extra_cells = 1;
  c.window_m = 3;
  c.n_min = 2;
  c.gamma = 0.5;
  c.seed = 3;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string checkpoint_bytes(const SearchEngine& e) {
  std::ostringstream out;
  e.save_checkpoint(out);
  return out.str();
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("forced consecutive skips reproduce a sequential stage") {
    Rng rng(8);
    for (int n = 1; n <= 5; ++n) {
      ParamStore store(n);
      std::vector<std::unique_ptr<Conv>> convs;
      for (int c = 0; c < n; ++c) {
        convs.push_back(std::make_unique<Conv>(store, "c" + std::to_string(c), 3, 3, 3, Conv2dAttrs{}));
      }
      Graph g;
      ForwardCtx ctx(g, true);
      Tensor x0({2, 3, 5, 5}), x1({2, 3, 5, 5});
      for (double& v : x0.data()) v = rng.normal();
      for (double& v : x1.data()) v = rng.normal();
      const CellEval eval = [&](int c, Var in) { return relu(convs[static_cast<std::size_t>(c)]->forward(ctx, in)); };
      const std::array<Var, 2> inputs{g.constant(x0), g.constant(x1)};
      const StageSpec spec{n, n + 1, 2};
      const StageOutput relaxed = stage_forward(inputs, spec, g.constant(chain_logits(spec)), std::nullopt, eval,
                                                StageMode::kFixedCount);
      const StageOutput chain = stage_forward(inputs, spec, std::nullopt, std::nullopt, eval, StageMode::kChain);
      // Written out by hand: each cell reads the node just before it.
      std::vector<Var> nodes{inputs[0], inputs[1]};
      for (int c = 0; c < n; ++c) nodes.push_back(eval(c, nodes.back()));
      CHECK(max_abs_diff(relaxed.second.value(), nodes.back().value()) == 0.0);
      CHECK(max_abs_diff(relaxed.first.value(), nodes[nodes.size() - 2].value()) == 0.0);
      CHECK(max_abs_diff(chain.second.value(), nodes.back().value()) == 0.0);
    }
  }

  TEST_CASE("relaxed chain network trains like the sequential network") {
    NetworkSpec seq;
    seq.init_channels = 2;
    seq.n_intermediate = 2;
    seq.multiplier = 2;
    seq.cells_per_stage = {3, 2, 4};
    seq.window_m = 5;
    seq.n_min = 2;
    seq.cells = CellSource::kSearchShared;
    seq.stages = StageSource::kChain;
    NetworkSpec relaxed = seq;
    relaxed.stages = StageSource::kSupernet;
    Network a(seq, 21), b(relaxed, 21);
    for (int s = 0; s < 3; ++s) {
      REQUIRE(relaxed.stage_spec(s).window_m == relaxed.cells_per_stage[static_cast<std::size_t>(s)] + 1);
      b.stage_alphas()[static_cast<std::size_t>(s)]->value = chain_logits(relaxed.stage_spec(s));
    }
    for (const auto* alphas : {&a.normal_alphas(), &a.reduction_alphas()}) {
      for (std::size_t i = 0; i < alphas->size(); ++i) {
        const auto& other = alphas == &a.normal_alphas() ? b.normal_alphas() : b.reduction_alphas();
        REQUIRE(max_abs_diff((*alphas)[i]->value, other[i]->value) == 0.0);
      }
    }
    auto params = [](Network& n) {
      std::vector<Parameter*> out;
      for (const auto& p : n.weights().params()) out.push_back(p.get());
      return out;
    };
    REQUIRE(a.num_weights() == b.num_weights());
    Sgd sa(params(a), {0.05, 0.9, 3e-4, 5.0}), sb(params(b), {0.05, 0.9, 3e-4, 5.0});
    const Dataset& data = tiny_data();
    double worst = 0.0;
    for (int step = 0; step < 10; ++step) {
      std::vector<int> idx;
      for (int k = 0; k < 8; ++k) idx.push_back((step * 8 + k) % data.size());
      auto [x, y] = data.batch(idx);
      std::array<double, 2> losses{};
      int which = 0;
      for (Network* net : {&a, &b}) {
        net->weights().zero_grad();
        Graph g;
        ForwardCtx ctx(g, true);
        ctx.freeze(net->arch());
        Var loss = cross_entropy(net->forward(ctx, g.constant(x)), y);
        g.backward(loss);
        losses[static_cast<std::size_t>(which++)] = loss.value().item();
      }
      worst = std::max(worst, std::abs(losses[0] - losses[1]));
      sa.step(0.05);
      sb.step(0.05);
    }
    for (std::size_t i = 0; i < a.weights().params().size(); ++i) {
      worst = std::max(worst, max_abs_diff(a.weights().params()[i]->value, b.weights().params()[i]->value));
    }
    CHECK(worst <= 1e-10);
  }

  TEST_CASE("search is deterministic and resumes exactly") {
    const Dataset& data = tiny_data();
    for (SearchPhase phase : {SearchPhase::kCells, SearchPhase::kDistribution, SearchPhase::kStages}) {
      SearchConfig config = tiny_search(phase);
      if (phase != SearchPhase::kCells) {
        const Genotype cells = sample_random_genotype({2, 2, 1, 1, {2, 2, 2}, 3, 2, 4}, 6);
        config.normal = cells.normal;
        config.reduction = cells.reduction;
      }
      SearchEngine full(config, data), again(config, data), first(config, data);
      full.run();
      again.run();
      CHECK(checkpoint_bytes(full) == checkpoint_bytes(again));
      CHECK(full.log_text() == again.log_text());
      first.run_epoch();
      std::stringstream saved(checkpoint_bytes(first));
      SearchEngine resumed(config, data);
      resumed.load_checkpoint(saved);
      CHECK(resumed.epoch() == 1);
      resumed.run_epoch();
      CHECK(checkpoint_bytes(resumed) == checkpoint_bytes(full));
      CHECK(serialize_genotype(resumed.derived_genotype()) == serialize_genotype(full.derived_genotype()));
      CHECK(validate_genotype(full.derived_genotype()).empty());
      const std::string log = full.log_text();
      CHECK(log.rfind("epoch,phase,train_loss,val_loss,val_acc,L_depth,L_comp\n", 0) == 0);
      CHECK(std::count(log.begin(), log.end(), '\n') == 3);
    }
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    const Dataset& data = tiny_data();
    SearchEngine e(tiny_search(SearchPhase::kCells), data);
    std::string bytes = checkpoint_bytes(e);
    std::stringstream bad_magic("HDAS0" + bytes.substr(5));
    CHECK_THROWS_AS(e.load_checkpoint(bad_magic), Error);
    std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(e.load_checkpoint(truncated), Error);
  }

  TEST_CASE("non-finite architecture values name their group") {
    const Dataset& data = tiny_data();
    SearchEngine e(tiny_search(SearchPhase::kCells), data);
    e.network().normal_alphas()[0]->value[3] = std::nan("");
    try {
      e.run_epoch();
      FAIL("expected a numeric error");
    } catch (const Error& err) {
      CHECK(err.kind() == ErrorKind::kNumeric);
      const std::string what = err.what();
      CHECK(what.find("architecture") != std::string::npos);
      CHECK(what.find("alpha.normal0") != std::string::npos);
    }
  }

  TEST_CASE("random genotypes are valid and seeded") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      RandomGenotypeSpec spec;
      spec.cells_per_stage = {2 + static_cast<int>(seed % 4), 3, 5};
      const Genotype g = sample_random_genotype(spec, seed);
      CHECK(validate_genotype(g).empty());
      CHECK(g.cells_per_stage == spec.cells_per_stage);
      CHECK(g == sample_random_genotype(spec, seed));
      const Genotype r = sample_random_stages(g, 3, seed + 100);
      CHECK(r.normal == g.normal);
      CHECK(r.reduction == g.reduction);
      CHECK(validate_genotype(r).empty());
    }
    CHECK(sample_random_genotype({}, 1) != sample_random_genotype({}, 2));
  }

  TEST_CASE("relative improvement") {
    CHECK(relative_improvement(0.9, 0.8) == doctest::Approx(12.5));
    CHECK(relative_improvement(0.5, 0.5) == 0.0);
    CHECK(relative_improvement(0.4, 0.5) == doctest::Approx(-20.0));
    CHECK_THROWS_AS(relative_improvement(0.5, 0.0), Error);
  }

  TEST_CASE("short training runs and reports") {
    const auto [train, test] = make_toy_dataset({8, 64, 32, 0.1, 2});
    const Genotype g = sample_random_genotype({2, 2, 1, 1, {1, 1, 1}, 2, 2, 4}, 4);
    auto net = build_network(g, 7);
    EvalConfig config;
    config.epochs = 2;
    config.batch_size = 16;
    const TrainResult r = train_eval(*net, train, test, config);
    CHECK(r.train_loss.size() == 2);
    CHECK(r.test_accuracy >= 0.0);
    CHECK(r.test_accuracy <= 1.0);
    const std::string line = format_result_line(7, g, r, 2);
    CHECK(line.rfind("7," + genotype_hash(g) + ",", 0) == 0);
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
  }
}
