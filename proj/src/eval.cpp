#include "hdas/eval.hpp"

#include <cmath>
#include <cstdio>

#include "hdas/error.hpp"

namespace hdas {

std::unique_ptr<Network> build_network(const Genotype& g, std::uint64_t seed, int in_channels) {
  NetworkSpec spec = spec_from_genotype(g);
  spec.in_channels = in_channels;
  return std::make_unique<Network>(spec, seed);
}

double evaluate(Network& net, const Dataset& data, int batch_size) {
  if (data.size() == 0) fail(ErrorKind::kInvalidArgument, "evaluate: empty dataset");
  int correct = 0;
  for (int start = 0; start < data.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    auto [x, y] = data.batch(idx);
    Graph g;
    ForwardCtx ctx(g, false);
    ctx.freeze(net.weights());
    ctx.freeze(net.arch());
    const Tensor& logits = net.forward(ctx, g.constant(std::move(x))).value();
    const int k = logits.dim(1);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double* row = logits.ptr() + i * static_cast<std::size_t>(k);
      int best = 0;
      for (int j = 1; j < k; ++j) {
        if (row[j] > row[best]) best = j;
      }
      correct += best == y[i];
    }
  }
  return static_cast<double>(correct) / data.size();
}

TrainResult train_eval(Network& net, const Dataset& train, const Dataset& test, const EvalConfig& config) {
  if (config.epochs < 0 || config.batch_size < 2) {
    fail(ErrorKind::kInvalidArgument, "train_eval: epochs must be >= 0 and batch_size >= 2");
  }
  std::vector<Parameter*> params;
  for (const auto& p : net.weights().params()) params.push_back(p.get());
  Sgd sgd(params, config.sgd);
  Rng rng(mix_seed(config.seed, "train.order"));
  const long steps_per_epoch = std::max(1, train.size() / config.batch_size);
  const long total = steps_per_epoch * config.epochs;
  long step = 0;
  TrainResult result;
  result.params = net.num_weights();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(train.size()));
    for (int i = 0; i < train.size(); ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = train.size() - 1; i > 0; --i) {
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    }
    double sum = 0.0;
    for (long s = 0; s < steps_per_epoch; ++s) {
      const auto begin = order.begin() + s * config.batch_size;
      const auto end = order.begin() + std::min<long>(train.size(), (s + 1) * config.batch_size);
      auto [x, y] = train.batch(std::vector<int>(begin, end));
      net.weights().zero_grad();
      Graph g;
      ForwardCtx ctx(g, true);
      ctx.freeze(net.arch());
      Var loss = cross_entropy(net.forward(ctx, g.constant(std::move(x))), y);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        fail(ErrorKind::kNumeric, "train_eval: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(s));
      }
      g.backward(loss);
      sgd.step(cosine_lr(config.sgd.lr, step, total));
      ++step;
      sum += lv;
    }
    result.train_loss.push_back(sum / static_cast<double>(steps_per_epoch));
  }
  result.test_accuracy = evaluate(net, test);
  return result;
}

double relative_improvement(double acc_method, double acc_random) {
  if (!(acc_random > 0.0)) fail(ErrorKind::kInvalidArgument, "relative_improvement: random accuracy must be positive");
  return 100.0 * (acc_method - acc_random) / acc_random;
}

namespace {

std::array<int, 2> distinct_pair(Rng& rng, int lo, int hi) {
  const int n = hi - lo;
  int a = rng.uniform_int(n);
  int b = rng.uniform_int(n - 1);
  if (b >= a) ++b;
  if (a > b) std::swap(a, b);
  return {lo + a, lo + b};
}

StageGenotype random_stage(Rng& rng, int n_cells, int window_m) {
  StageGenotype g;
  g.window = window_m;
  for (int c = 0; c < n_cells; ++c) {
    const auto pair = distinct_pair(rng, std::max(0, c + 2 - window_m), c + 2);
    std::array<StageEdge, 2> edges;
    for (int e = 0; e < 2; ++e) {
      edges[static_cast<std::size_t>(e)] = {pair[static_cast<std::size_t>(e)],
                                            static_cast<StageOp>(rng.uniform_int(kNumStageOps - 1))};
    }
    g.cells.push_back(edges);
  }
  return g;
}

}  // namespace

Genotype sample_random_genotype(const RandomGenotypeSpec& spec, std::uint64_t seed) {
  if (spec.n_intermediate < 1 || spec.multiplier < 1 || spec.multiplier > spec.n_intermediate) {
    fail(ErrorKind::kInvalidArgument, "sample_random_genotype: invalid cell sizes");
  }
  Rng rng(mix_seed(seed, "random.genotype"));
  auto random_cell = [&] {
    CellGenotype g;
    for (int k = 0; k < spec.n_intermediate; ++k) {
      const auto pair = distinct_pair(rng, 0, k + 2);
      std::array<CellEdge, 2> edges;
      for (int e = 0; e < 2; ++e) {
        edges[static_cast<std::size_t>(e)] = {pair[static_cast<std::size_t>(e)],
                                              static_cast<CellOp>(rng.uniform_int(kNumCellOps - 1))};
      }
      g.nodes.push_back(edges);
    }
    for (int i = 0; i < spec.multiplier; ++i) g.concat.push_back(spec.n_intermediate + 2 - spec.multiplier + i);
    return g;
  };
  Genotype g;
  for (int i = 0; i < spec.n_normal; ++i) g.normal.push_back(random_cell());
  for (int i = 0; i < spec.n_reduction; ++i) g.reduction.push_back(random_cell());
  std::array<StageGenotype, 3> stages;
  for (int s = 0; s < 3; ++s) {
    stages[static_cast<std::size_t>(s)] = random_stage(rng, spec.cells_per_stage[static_cast<std::size_t>(s)], spec.window_m);
  }
  g.stages = stages;
  g.cells_per_stage = spec.cells_per_stage;
  g.init_channels = spec.init_channels;
  g.num_classes = spec.num_classes;
  g.source = seed;
  return g;
}

Genotype sample_random_stages(const Genotype& base, int window_m, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "random.stages"));
  Genotype g = base;
  std::array<StageGenotype, 3> stages;
  for (int s = 0; s < 3; ++s) {
    stages[static_cast<std::size_t>(s)] = random_stage(rng, base.cells_per_stage[static_cast<std::size_t>(s)], window_m);
  }
  g.stages = stages;
  g.source = seed;
  return g;
}

std::string format_result_line(std::uint64_t seed, const Genotype& g, const TrainResult& r, int epochs) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%llu,%s,%.6f,%zu,%d", static_cast<unsigned long long>(seed),
                genotype_hash(g).c_str(), r.test_accuracy, r.params, epochs);
  return buf;
}

}  // namespace hdas
