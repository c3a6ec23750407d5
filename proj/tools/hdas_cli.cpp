// Command-line front end. Talks to the engine only through the C API.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hdas/hdas.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitUsage = 64;

/// Carries an exit code out of a subcommand.
struct Exit {
  int code;
};

[[noreturn]] void die(hdas_status st, const std::string& context) {
  std::fprintf(stderr, "error: %s: %s\n", context.c_str(), hdas_last_error());
  throw Exit{st == HDAS_ERR_VALIDATION ? kExitValidation : kExitRuntime};
}

void check(hdas_status st, const std::string& context) {
  if (st != HDAS_OK) die(st, context);
}

/// Owns a string returned by the library.
class Str {
 public:
  Str() = default;
  ~Str() { hdas_string_free(p_); }
  Str(const Str&) = delete;
  Str& operator=(const Str&) = delete;
  char** out() { return &p_; }
  std::string str() const { return p_ ? p_ : ""; }

 private:
  char* p_ = nullptr;
};

template <typename T, void (*Free)(T*)>
class Handle {
 public:
  Handle() = default;
  ~Handle() { Free(p_); }
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  T** out() { return &p_; }
  T* get() const { return p_; }

 private:
  T* p_ = nullptr;
};

using Config = Handle<hdas_config, hdas_config_free>;
using Dataset = Handle<hdas_dataset, hdas_dataset_free>;
using Genotype = Handle<hdas_genotype, hdas_genotype_free>;
using Search = Handle<hdas_search, hdas_search_free>;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

struct Context {
  Config config;
  fs::path out;

  /// Writes a file directly inside the output directory.
  void write(const std::string& name, const std::string& content) const {
    fs::create_directories(out);
    const fs::path path = out / fs::path(name).filename();
    std::ofstream f(path, std::ios::binary);
    f << content;
    if (!f) {
      std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
      throw Exit{kExitRuntime};
    }
  }
  void append(const std::string& name, const std::string& line) const {
    fs::create_directories(out);
    std::ofstream f(out / fs::path(name).filename(), std::ios::binary | std::ios::app);
    f << line << "\n";
  }
  std::string get(const char* key) const {
    Str v;
    check(hdas_config_get(config.get(), key, v.out()), key);
    return v.str();
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "configuration file (defaults apply when omitted)");
  cmd->add_option("--seed", c.seed, "run seed for search and training");
  cmd->add_option("--out", c.out_dir, "output directory (default: output.dir of the config)");
}

std::unique_ptr<Context> make_context(const Common& c) {
  auto ctx = std::make_unique<Context>();
  if (c.config_path.empty()) {
    check(hdas_config_default(ctx->config.out()), "config");
  } else {
    check(hdas_config_load(c.config_path.c_str(), ctx->config.out()), c.config_path);
  }
  if (c.seed) check(hdas_config_set_seed(ctx->config.get(), *c.seed), "seed");
  if (!c.out_dir.empty()) check(hdas_config_set(ctx->config.get(), "output.dir", c.out_dir.c_str()), "--out");
  ctx->out = ctx->get("output.dir");
  return ctx;
}

void load_genotype(const std::string& path, Genotype& g) {
  Str errors;
  const hdas_status st = hdas_genotype_load(path.c_str(), g.out(), errors.out());
  if (st == HDAS_ERR_VALIDATION) {
    std::fprintf(stderr, "%s: invalid genotype\n%s", path.c_str(), errors.str().c_str());
    throw Exit{kExitValidation};
  }
  check(st, path);
}

std::string serialize(const hdas_genotype* g) {
  Str text;
  check(hdas_genotype_serialize(g, text.out()), "serialize");
  return text.str();
}

int run_search(const Common& common, hdas_phase phase, const std::string& name, const std::string& cells_path,
               bool resume) {
  auto ctx = make_context(common);
  Dataset data;
  check(hdas_dataset_load(ctx->config.get(), data.out()), "dataset");
  Genotype cells;
  if (!cells_path.empty()) load_genotype(cells_path, cells);
  Search search;
  check(hdas_search_create(ctx->config.get(), data.get(), phase, cells.get(), search.out()), "search");
  const std::string ckpt = (ctx->out / (name + ".ckpt")).string();
  if (resume && fs::exists(ckpt)) {
    check(hdas_search_load(search.get(), ckpt.c_str()), ckpt);
    int epoch = 0;
    check(hdas_search_progress(search.get(), &epoch, nullptr), "progress");
    std::fprintf(stderr, "resumed %s at epoch %d\n", ckpt.c_str(), epoch);
  }
  ctx->write(name + ".config", [&] {
    Str text;
    check(hdas_config_format(ctx->config.get(), text.out()), "config");
    return text.str();
  }());
  for (;;) {
    int epoch = 0, epochs = 0;
    check(hdas_search_progress(search.get(), &epoch, &epochs), "progress");
    if (epoch >= epochs) break;
    Str line;
    check(hdas_search_run_epoch(search.get(), line.out()), name);
    std::printf("%s\n", line.str().c_str());
    std::fflush(stdout);
    check(hdas_search_save(search.get(), ckpt.c_str()), ckpt);
    Str log;
    check(hdas_search_log(search.get(), log.out()), "log");
    ctx->write(name + ".log", log.str());
  }
  Genotype result;
  check(hdas_search_genotype(search.get(), result.out()), "derive");
  const std::string text = serialize(result.get());
  ctx->write(name + ".genotype", text);
  std::printf("%s", text.c_str());
  return kExitOk;
}

int run_derive(const Common& common, const std::string& phase_name, const std::string& ckpt,
               const std::string& cells_path) {
  auto ctx = make_context(common);
  hdas_phase phase = HDAS_PHASE_CELLS;
  if (phase_name == "distribution") phase = HDAS_PHASE_DISTRIBUTION;
  if (phase_name == "stages") phase = HDAS_PHASE_STAGES;
  Dataset data;
  check(hdas_dataset_load(ctx->config.get(), data.out()), "dataset");
  Genotype cells;
  if (!cells_path.empty()) load_genotype(cells_path, cells);
  Search search;
  check(hdas_search_create(ctx->config.get(), data.get(), phase, cells.get(), search.out()), "search");
  check(hdas_search_load(search.get(), ckpt.c_str()), ckpt);
  Genotype result;
  check(hdas_search_genotype(search.get(), result.out()), "derive");
  const std::string text = serialize(result.get());
  ctx->write("derived.genotype", text);
  std::printf("%s", text.c_str());
  return kExitOk;
}

int run_train(const Common& common, const std::string& path, std::optional<int> baseline) {
  auto ctx = make_context(common);
  Genotype g;
  load_genotype(path, g);
  Dataset data;
  check(hdas_dataset_load(ctx->config.get(), data.out()), "dataset");
  const std::uint64_t seed = std::stoull(ctx->get("eval.seed"));
  auto train_one = [&](const hdas_genotype* genotype) {
    hdas_train_result r{};
    check(hdas_train(ctx->config.get(), data.get(), genotype, seed, &r), "train");
    Str line;
    check(hdas_result_line(seed, genotype, &r, line.out()), "result");
    std::printf("%s\n", line.str().c_str());
    std::fflush(stdout);
    ctx->append("results.csv", line.str());
    return r.test_accuracy;
  };
  const double acc = train_one(g.get());
  const int samples = baseline ? *baseline : std::stoi(ctx->get("eval.random_samples"));
  if (samples <= 0) return kExitOk;
  const int window = std::stoi(ctx->get("stage.window_m"));
  double sum = 0.0;
  for (int k = 0; k < samples; ++k) {
    // Baseline genotypes depend on the sample index only, so every run
    // compares against the same random set.
    Genotype random;
    check(hdas_genotype_random_stages(g.get(), window, static_cast<std::uint64_t>(k), random.out()), "random");
    sum += train_one(random.get());
  }
  const double acc_random = sum / samples;
  double ri = 0.0;
  check(hdas_relative_improvement(acc, acc_random, &ri), "relative improvement");
  std::printf("accuracy %.6f random %.6f ri %.4f\n", acc, acc_random, ri);
  return kExitOk;
}

int run_analyze(const Common& common) {
  auto ctx = make_context(common);
  Str report;
  int all_pass = 0;
  check(hdas_analyze_space(report.out(), &all_pass), "analyze-space");
  std::printf("%s", report.str().c_str());
  return all_pass ? kExitOk : kExitValidation;
}

int run_validate(const Common& common, const std::string& path) {
  auto ctx = make_context(common);
  Genotype g;
  load_genotype(path, g);
  Str hash;
  check(hdas_genotype_hash(g.get(), hash.out()), "hash");
  std::printf("%s: ok (%s)\n", path.c_str(), hash.str().c_str());
  return kExitOk;
}

int run_export(const Common& common, const std::string& path) {
  auto ctx = make_context(common);
  Genotype g;
  load_genotype(path, g);
  Str dot;
  check(hdas_genotype_dot(g.get(), dot.out()), "export-dot");
  const std::string name = fs::path(path).stem().string() + ".dot";
  ctx->write(name, dot.str());
  std::printf("%s\n", (ctx->out / name).c_str());
  return kExitOk;
}

int run_grad_check(const Common& common, const std::vector<std::uint64_t>& seeds) {
  auto ctx = make_context(common);
  Str report;
  int all_pass = 0;
  check(hdas_grad_check(seeds.data(), seeds.size(), report.out(), &all_pass), "grad-check");
  std::printf("%s", report.str().c_str());
  return all_pass ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical differentiable architecture search"};
  app.require_subcommand(1);

  Common common;
  std::string cells_path, genotype_path, ckpt_path, phase = "cells";
  bool resume = false;
  std::optional<int> baseline;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  auto* cells = app.add_subcommand("search-cells", "search normal and reduction cells on a sequential supernet");
  add_common(cells, common);
  cells->add_flag("--resume", resume, "continue from the checkpoint in the output directory");

  auto* dist = app.add_subcommand("search-distribution", "search how many cells each stage retains");
  add_common(dist, common);
  dist->add_option("--cells", cells_path, "genotype providing the cells")->required();
  dist->add_flag("--resume", resume, "continue from the checkpoint in the output directory");

  auto* stages = app.add_subcommand("search-stages", "search stage DAGs with fixed cell counts");
  add_common(stages, common);
  stages->add_option("--cells", cells_path, "genotype providing the cells and cell counts")
      ->required();
  stages->add_flag("--resume", resume, "continue from the checkpoint in the output directory");

  auto* derive = app.add_subcommand("derive", "derive a genotype from a search checkpoint");
  add_common(derive, common);
  derive->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  derive->add_option("--phase", phase, "phase of the checkpoint")
      ->check(CLI::IsMember({"cells", "distribution", "stages"}));
  derive->add_option("--cells", cells_path, "cell genotype used by the search");

  auto* train = app.add_subcommand("train", "train a genotype from scratch and evaluate it");
  add_common(train, common);
  train->add_option("genotype", genotype_path, "genotype file")->required();
  train->add_option("--baseline", baseline, "random-stage samples for the relative improvement (0 disables)")
      ->check(CLI::NonNegativeNumber);

  auto* analyze = app.add_subcommand("analyze-space", "exact search-space sizes against the quoted magnitudes");
  add_common(analyze, common);

  auto* validate = app.add_subcommand("validate", "check a genotype file");
  add_common(validate, common);
  validate->add_option("genotype", genotype_path, "genotype file")->required();

  auto* dot = app.add_subcommand("export-dot", "write Graphviz views of a genotype");
  add_common(dot, common);
  dot->add_option("genotype", genotype_path, "genotype file")->required();

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of every differentiable op");
  add_common(grad, common);
  grad->add_option("--seeds", seeds, "seeds")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::fprintf(stderr, "\n%s", app.help().c_str());
    return kExitUsage;
  }

  try {
    if (*cells) return run_search(common, HDAS_PHASE_CELLS, "cells", "", resume);
    if (*dist) return run_search(common, HDAS_PHASE_DISTRIBUTION, "distribution", cells_path, resume);
    if (*stages) return run_search(common, HDAS_PHASE_STAGES, "stages", cells_path, resume);
    if (*derive) return run_derive(common, phase, ckpt_path, cells_path);
    if (*train) return run_train(common, genotype_path, baseline);
    if (*analyze) return run_analyze(common);
    if (*validate) return run_validate(common, genotype_path);
    if (*dot) return run_export(common, genotype_path);
    if (*grad) return run_grad_check(common, seeds);
  } catch (const Exit& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
