// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Reference values come from tests/oracles.hpp.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hdas/config.hpp"
#include "hdas/error.hpp"
#include "hdas/eval.hpp"
#include "hdas/gradcheck.hpp"
#include "hdas/search.hpp"
#include "hdas/space.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hdas;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Gradient suite over three seeds, tol 1e-4, under two minutes.
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto cases = run_gradient_suite({1, 2, 3}, 1e-4);
  const double elapsed = seconds_since(t0);
  int failed = 0;
  double worst = 0.0;
  std::string first_fail;
  std::set<std::string> names;
  for (const auto& c : cases) {
    names.insert(c.name);
    worst = std::max(worst, c.report.max_rel_err);
    if (!c.report.pass) {
      if (first_fail.empty()) first_fail = c.name;
      ++failed;
    }
  }
  const auto covered = [&](const std::string& prefix) {
    return std::any_of(names.begin(), names.end(), [&](const std::string& n) { return n.rfind(prefix, 0) == 0; });
  };
  const bool losses = covered("depth_loss.alpha") && covered("depth_loss.beta") && covered("complexity_loss");
  Outcome o;
  o.pass = failed == 0 && losses && elapsed < 120.0;
  o.detail = fmt("%zu checks, %d failed, worst rel err %.2e, %.1f s (tol 1e-4, limit 120 s)", cases.size(), failed,
                 worst, elapsed);
  if (!losses) o.detail += "; loss cases missing";
  if (!first_fail.empty()) o.detail += "; first failure " + first_fail;
  return o;
}

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

// 2. Depth loss against the expanded recursion.
Outcome depth_oracle() {
  Rng rng(20240601);
  double worst = 0.0;
  int tables = 0, min_window = 99, max_window = 0;
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
      const int n = 2 + rng.uniform_int(5);
      const int window = 2 + rng.uniform_int(n);  // 2..n+1, so up to 7
      specs.push_back({n, window, 2 + rng.uniform_int(n - 1)});
      min_window = std::min(min_window, window);
      max_window = std::max(max_window, window);
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
      ++tables;
    }
    const double got = depth_loss(alpha_vars, beta_vars, specs, normalize).value().item();
    worst = std::max(worst, std::abs(got - oracle::depth_loss(alphas, betas, specs, normalize)));
  }
  const StageSpec two{2, 2, 2};
  Graph g;
  const double chain = depth_loss({g.constant(chain_logits(two))}, {std::nullopt}, {two}).value().item();
  Outcome o;
  o.pass = tables >= 500 && worst <= 1e-10 && chain == -1.0 && min_window == 2 && max_window == 7;
  o.detail = fmt("%d tables (windows %d-%d), max |diff| %.2e (limit 1e-10); N=2 chain %.17g (want -1 exactly)", tables,
                 min_window, max_window, worst, chain);
  return o;
}

// 3. Complexity loss hand cases.
Outcome complexity_cases() {
  Graph g;
  const double uniform = complexity_loss({g.constant(Tensor({5}, 0.0))}, {1.0}, 4).value().item();
  const double single = complexity_loss({g.constant(Tensor({1}, {0.83}))}, {1.0}, 4).value().item();
  Outcome o;
  o.pass = std::abs(uniform - 6.0) <= 1e-12 && single == 4.0;
  o.detail = fmt("uniform beta N=8 N_min=4: %.17g (want 6 +- 1e-12); singleton pair: %.17g (want 4 exactly)", uniform,
                 single);
  return o;
}

// 4. Search-space magnitudes and exact anchors.
Outcome space_accounting() {
  const auto t0 = Clock::now();
  const MagnitudeReport report = verify_magnitudes();
  const BigInt cell = count_cell_space(4, 7);
  const BigInt stages = count_space({SpaceKind::kStage, 6, 3, 3, 4, 3});
  const double elapsed = seconds_since(t0);
  const bool anchors = cell == BigInt(1037664180) && stages == BigInt(129140163) * 129140163 * 129140163;
  std::string failing;
  for (const auto& e : report.entries) {
    if (!e.pass) failing += fmt("; %s: log10 %.3f vs quoted %d", e.name.c_str(), e.log10, e.quoted_exponent);
  }
  Outcome o;
  o.pass = report.all_pass && anchors && elapsed < 1.0;
  o.detail = fmt("%zu spaces, anchors %s, %.3f s", report.entries.size(), anchors ? "exact" : "MISMATCH", elapsed) +
             failing;
  return o;
}

// 5. Dead cells and stage depth against path enumeration.
Outcome graph_oracles() {
  Rng rng(4242);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + rng.uniform_int(6);
    const StageGenotype g = oracle::random_stage(rng, n, 2 + rng.uniform_int(n));
    if (dead_cells(g) != oracle::dead_cells(g)) ++mismatches;
    if (stage_depth(g) != oracle::stage_depth(g)) ++mismatches;
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = fmt("1000 random stage DAGs (N <= 6), %d mismatches", mismatches);
  return o;
}

// 6. A relaxed stage supernet with logits forcing the skip chain trains
// exactly like the sequential network.
Outcome chain_degeneration(const Dataset& data) {
  NetworkSpec seq;
  seq.init_channels = 4;
  seq.n_intermediate = 2;
  seq.multiplier = 2;
  seq.cells_per_stage = {2, 3, 2};
  seq.window_m = 4;
  seq.n_min = 2;
  seq.cells = CellSource::kSearchStageSpecific;
  seq.stages = StageSource::kChain;
  NetworkSpec relaxed = seq;
  relaxed.stages = StageSource::kSupernet;
  Network a(seq, 99), b(relaxed, 99);
  for (int s = 0; s < 3; ++s) b.stage_alphas()[static_cast<std::size_t>(s)]->value = chain_logits(relaxed.stage_spec(s));
  auto params = [](Network& n) {
    std::vector<Parameter*> out;
    for (const auto& p : n.weights().params()) out.push_back(p.get());
    return out;
  };
  const SgdConfig sgd{0.05, 0.9, 3e-4, 5.0};
  Sgd sa(params(a), sgd), sb(params(b), sgd);
  double worst = 0.0;
  for (int step = 0; step < 10; ++step) {
    std::vector<int> idx;
    for (int k = 0; k < 16; ++k) idx.push_back((step * 16 + k) % data.size());
    auto [x, y] = data.batch(idx);
    double losses[2];
    int which = 0;
    for (Network* net : {&a, &b}) {
      net->weights().zero_grad();
      Graph g;
      ForwardCtx ctx(g, true);
      ctx.freeze(net->arch());
      Var loss = cross_entropy(net->forward(ctx, g.constant(x)), y);
      g.backward(loss);
      losses[which++] = loss.value().item();
    }
    worst = std::max(worst, std::abs(losses[0] - losses[1]));
    sa.step(0.05);
    sb.step(0.05);
  }
  Outcome o;
  o.pass = worst <= 1e-10;
  o.detail = fmt("10 SGD steps, max |loss diff| %.3e (limit 1e-10)", worst);
  return o;
}

struct Pipeline {
  Genotype cells;
  Genotype stages;
  double accuracy = 0.0;
  double seconds = 0.0;
};

Genotype run_search(SearchConfig sc, SearchPhase phase, const Genotype* cells, const Dataset& data) {
  sc.phase = phase;
  if (cells) {
    sc.normal = cells->normal;
    sc.reduction = cells->reduction;
  }
  SearchEngine engine(sc, data);
  engine.run();
  return engine.derived_genotype();
}

double retrain(const Config& cfg, const Genotype& g, std::uint64_t seed, const LoadedData& data) {
  EvalConfig ec = cfg.eval;
  ec.seed = seed;
  auto net = build_network(g, seed, data.train.channels());
  return train_eval(*net, data.train, data.test, ec).test_accuracy;
}

struct Shared {
  Config base;
  LoadedData data;
  std::map<std::uint64_t, Pipeline> pipelines;  // filled by criterion 7
};

Config seeded(const Config& base, std::uint64_t seed) {
  Config c = base;
  apply_seed(c, seed);
  return c;
}

const Pipeline& pipeline(Shared& sh, std::uint64_t seed) {
  auto it = sh.pipelines.find(seed);
  if (it != sh.pipelines.end()) return it->second;
  const Config cfg = seeded(sh.base, seed);
  Pipeline p;
  const auto t0 = Clock::now();
  p.cells = run_search(cfg.search, SearchPhase::kCells, nullptr, sh.data.search);
  p.stages = run_search(cfg.search, SearchPhase::kStages, &p.cells, sh.data.search);
  p.accuracy = retrain(cfg, p.stages, seed, sh.data);
  p.seconds = seconds_since(t0);
  std::fprintf(stderr, "  pipeline seed %llu: acc %.4f, %.0f s, stage depths %d %d %d\n",
               static_cast<unsigned long long>(seed), p.accuracy, p.seconds, stage_depth((*p.stages.stages)[0]),
               stage_depth((*p.stages.stages)[1]), stage_depth((*p.stages.stages)[2]));
  return sh.pipelines.emplace(seed, std::move(p)).first->second;
}

// 7. End-to-end toy pipeline over five seeds against random genotypes.
Outcome end_to_end(Shared& sh) {
  const Config& cfg = sh.base;
  RandomGenotypeSpec rs;
  rs.n_intermediate = cfg.search.n_intermediate;
  rs.multiplier = cfg.search.multiplier;
  rs.n_normal = cfg.search.stage_specific_cells ? 3 : 1;
  rs.n_reduction = cfg.search.stage_specific_cells ? 2 : 1;
  rs.cells_per_stage = cfg.search.cells_per_stage;
  rs.window_m = cfg.search.window_m;
  rs.init_channels = cfg.search.init_channels;
  rs.num_classes = sh.data.train.num_classes;
  double random_sum = 0.0;
  std::string random_list;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const double acc = retrain(cfg, sample_random_genotype(rs, k), k, sh.data);
    random_sum += acc;
    random_list += fmt("%s%.3f", k ? " " : "", acc);
    std::fprintf(stderr, "  random genotype %llu: acc %.4f\n", static_cast<unsigned long long>(k), acc);
  }
  const double random_acc = random_sum / 5.0;
  double min_acc = 1.0, max_seconds = 0.0, ri_sum = 0.0;
  std::string accs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Pipeline& p = pipeline(sh, seed);
    min_acc = std::min(min_acc, p.accuracy);
    max_seconds = std::max(max_seconds, p.seconds);
    ri_sum += relative_improvement(p.accuracy, random_acc);
    accs += fmt("%s%.3f", seed > 1 ? " " : "", p.accuracy);
  }
  const double mean_ri = ri_sum / 5.0;
  Outcome o;
  o.pass = min_acc >= 0.90 && max_seconds <= 900.0 && mean_ri > 0.0;
  o.detail = fmt("accuracies [%s] (min %.3f, need >= 0.90); slowest pipeline %.0f s (limit 900); random [%s] mean %.3f; "
                 "mean RI %+.2f%% (need > 0)",
                 accs.c_str(), min_acc, max_seconds, random_list.c_str(), random_acc, mean_ri);
  return o;
}

// 8. Larger gamma never retains more cells.
Outcome gamma_direction(Shared& sh) {
  const std::uint64_t seed = 1;
  const Config cfg = seeded(sh.base, seed);
  const Pipeline& p = pipeline(sh, seed);
  std::vector<std::array<int, 3>> counts;
  std::string text;
  for (double gamma : {0.0, 0.5, 5.0}) {
    SearchConfig sc = cfg.search;
    sc.gamma = gamma;
    const Genotype g = run_search(sc, SearchPhase::kDistribution, &p.cells, sh.data.search);
    counts.push_back(g.cells_per_stage);
    text += fmt("%sgamma %g: %d,%d,%d", text.empty() ? "" : "; ", gamma, g.cells_per_stage[0], g.cells_per_stage[1],
                g.cells_per_stage[2]);
  }
  bool monotone = true;
  for (std::size_t r = 1; r < counts.size(); ++r) {
    for (int s = 0; s < 3; ++s) monotone = monotone && counts[r][static_cast<std::size_t>(s)] <= counts[r - 1][static_cast<std::size_t>(s)];
  }
  Outcome o;
  o.pass = monotone;
  o.detail = "retained cells per stage, " + text;
  return o;
}

int total_depth(const Genotype& g) {
  int d = 0;
  for (const auto& s : *g.stages) d += stage_depth(s);
  return d;
}

int median3(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

// 9. The depth loss does not make searched stages shallower.
Outcome delta_direction(Shared& sh) {
  std::vector<int> with, without;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Config cfg = seeded(sh.base, seed);
    const Pipeline& p = pipeline(sh, seed);
    SearchConfig on = cfg.search, off = cfg.search;
    on.delta = 1.0;
    off.delta = 0.0;
    // The pipeline's stage search already used delta = 1 when the config says so.
    with.push_back(total_depth(cfg.search.delta == 1.0 ? p.stages
                                                       : run_search(on, SearchPhase::kStages, &p.cells, sh.data.search)));
    without.push_back(total_depth(run_search(off, SearchPhase::kStages, &p.cells, sh.data.search)));
  }
  const int m1 = median3(with), m0 = median3(without);
  Outcome o;
  o.pass = m1 >= m0;
  o.detail = fmt("summed stage depth per seed, delta=1: %d %d %d (median %d); delta=0: %d %d %d (median %d)", with[0],
                 with[1], with[2], m1, without[0], without[1], without[2], m0);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 10. Two CLI runs with the same config and seed write identical files.
Outcome determinism(const std::string& cli, const std::string& config_path, const fs::path& work) {
  const fs::path cfg = work / "determinism.cfg";
  {
    std::ofstream out(cfg);
    out << slurp(config_path) << "\nsearch.epochs = 3\n";
  }
  // Both runs use the same output path (it is echoed into the config files),
  // then move aside for comparison.
  const fs::path run = work / "run";
  std::vector<fs::path> dirs{work / "run_a", work / "run_b"};
  for (const auto& d : dirs) {
    fs::remove_all(run);
    fs::remove_all(d);
    const std::string common = " --config '" + cfg.string() + "' --seed 11 --out '" + run.string() + "' > /dev/null";
    const std::string cells = "'" + (run / "cells.genotype").string() + "'";
    for (const std::string& cmd : {"'" + cli + "' search-cells" + common,
                                   "'" + cli + "' search-distribution --cells " + cells + common,
                                   "'" + cli + "' search-stages --cells " + cells + common}) {
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    }
    fs::rename(run, d);
  }
  int files = 0;
  std::string differing;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    const fs::path other = dirs[1] / entry.path().filename();
    ++files;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) differing += " " + entry.path().filename().string();
  }
  int kinds = 0;
  for (const char* ext : {".genotype", ".ckpt", ".log"}) {
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      if (entry.path().extension() == ext) {
        ++kinds;
        break;
      }
    }
  }
  Outcome o;
  o.pass = differing.empty() && kinds == 3 && files >= 9;
  o.detail = fmt("%d files from three search phases compared byte for byte", files) +
             (differing.empty() ? std::string() : "; differing:" + differing);
  return o;
}

std::vector<unsigned char> cifar_record(unsigned char label, unsigned salt) {
  std::vector<unsigned char> r(3073);
  r[0] = label;
  for (std::size_t i = 1; i < r.size(); ++i) r[i] = static_cast<unsigned char>((i * 13 + salt) % 256);
  return r;
}

template <typename F>
std::pair<bool, std::string> expect_error(F f, ErrorKind kind, const std::string& needle) {
  try {
    f();
  } catch (const Error& e) {
    return {e.kind() == kind && std::string(e.what()).find(needle) != std::string::npos, e.what()};
  }
  return {false, "no error"};
}

// 11. CIFAR-10 decoding and structured errors.
Outcome cifar_loader(const fs::path& work) {
  auto bytes = cifar_record(2, 0);
  const auto second = cifar_record(7, 101);
  bytes.insert(bytes.end(), second.begin(), second.end());
  const fs::path path = work / "two_records.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  const Dataset d = load_cifar10_batch(path.string());
  const double mean[3] = {0.4914, 0.4822, 0.4465}, sd[3] = {0.2470, 0.2435, 0.2616};
  bool exact = d.size() == 2 && d.labels == std::vector<int>{2, 7} && d.images.shape() == Shape{2, 3, 32, 32};
  for (int i = 0; exact && i < 2; ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      for (int p = 0; p < 1024; ++p) {
        const double want = (bytes[static_cast<std::size_t>(i * 3073 + 1 + ch * 1024 + p)] / 255.0 - mean[ch]) / sd[ch];
        exact = exact && d.images[static_cast<std::size_t>((i * 3 + ch) * 1024 + p)] == want;
      }
    }
  }
  const auto short_file = expect_error([&] { decode_cifar10(std::vector<unsigned char>(3072)); }, ErrorKind::kIo, "3073");
  auto bad = bytes;
  bad[3073] = 10;
  const auto bad_label = expect_error([&] { decode_cifar10(bad); }, ErrorKind::kValidation, "record 1");
  Outcome o;
  o.pass = exact && short_file.first && bad_label.first;
  o.detail = std::string("2-record fixture ") + (exact ? "exact" : "MISMATCH") + "; 3072 bytes -> " +
             short_file.second + "; label 10 -> " + bad_label.second;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string config_path, cli, work_dir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--config", config_path, "toy pipeline config")->required()->check(CLI::ExistingFile);
  app.add_option("--cli", cli, "path to the hdas command-line binary")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work_dir, "scratch directory");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path work = fs::absolute(work_dir);
  fs::create_directories(work);
  cli = fs::absolute(cli).string();
  config_path = fs::absolute(config_path).string();

  Shared sh;
  sh.base = load_config(config_path);
  sh.data = load_data(sh.base.data);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"depth-loss oracle", depth_oracle},
      {"complexity-loss cases", complexity_cases},
      {"search-space accounting", space_accounting},
      {"graph-analysis oracles", graph_oracles},
      {"chain degeneration", [&] { return chain_degeneration(sh.data.search); }},
      {"end-to-end toy search", [&] { return end_to_end(sh); }},
      {"gamma direction", [&] { return gamma_direction(sh); }},
      {"delta direction", [&] { return delta_direction(sh); }},
      {"determinism", [&] { return determinism(cli, config_path, work); }},
      {"cifar-10 loader", [&] { return cifar_loader(work); }},
  };
  int failed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    ++run;
    if (!o.pass) ++failed;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", run - failed, run);
  return failed ? 1 : 0;
}
