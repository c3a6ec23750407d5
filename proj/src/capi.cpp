#include "hdas/hdas.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "hdas/config.hpp"
#include "hdas/dot.hpp"
#include "hdas/error.hpp"
#include "hdas/eval.hpp"
#include "hdas/gradcheck.hpp"
#include "hdas/search.hpp"
#include "hdas/space.hpp"
#include "hdas/stage.hpp"

struct hdas_config {
  hdas::Config config;
};

struct hdas_dataset {
  hdas::LoadedData data;
};

struct hdas_genotype {
  hdas::Genotype genotype;
};

struct hdas_search {
  std::unique_ptr<hdas::SearchEngine> engine;
};

namespace {

thread_local std::string g_last_error;

hdas_status status_of(hdas::ErrorKind kind) {
  switch (kind) {
    case hdas::ErrorKind::kShape: return HDAS_ERR_SHAPE;
    case hdas::ErrorKind::kInvalidArgument: return HDAS_ERR_INVALID_ARGUMENT;
    case hdas::ErrorKind::kValidation: return HDAS_ERR_VALIDATION;
    case hdas::ErrorKind::kNumeric: return HDAS_ERR_NUMERIC;
    case hdas::ErrorKind::kIo: return HDAS_ERR_IO;
  }
  return HDAS_ERR_INTERNAL;
}

template <typename F>
hdas_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return HDAS_OK;
  } catch (const hdas::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HDAS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return HDAS_ERR_INTERNAL;
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) hdas::fail(hdas::ErrorKind::kInvalidArgument, what);
}

std::string format_errors(const std::vector<hdas::ValidationError>& errors) {
  std::string out;
  for (const auto& e : errors) {
    out += e.line > 0 ? "line " + std::to_string(e.line) + ": " + e.message : e.message;
    out += "\n";
  }
  return out;
}

hdas_status parse_into(const std::string& text, hdas_genotype** out, char** errors) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    *out = nullptr;
    if (errors) *errors = nullptr;
    hdas::ParseResult r = hdas::parse_genotype(text);
    if (!r.genotype) {
      const std::string msg = format_errors(r.errors);
      if (errors) *errors = dup(msg);
      hdas::fail(hdas::ErrorKind::kValidation, msg.empty() ? "invalid genotype" : msg.substr(0, msg.size() - 1));
    }
    *out = new hdas_genotype{std::move(*r.genotype)};
  });
}

}  // namespace

extern "C" {

const char* hdas_last_error(void) { return g_last_error.c_str(); }

const char* hdas_status_name(hdas_status status) {
  switch (status) {
    case HDAS_OK: return "ok";
    case HDAS_ERR_SHAPE: return "shape error";
    case HDAS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case HDAS_ERR_VALIDATION: return "validation error";
    case HDAS_ERR_NUMERIC: return "numeric error";
    case HDAS_ERR_IO: return "i/o error";
    case HDAS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void hdas_string_free(char* s) { std::free(s); }

hdas_status hdas_config_default(hdas_config** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    *out = new hdas_config{};
  });
}

hdas_status hdas_config_parse(const char* text, hdas_config** out) {
  return guarded([&] {
    require(text != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    *out = new hdas_config{hdas::parse_config(text)};
  });
}

hdas_status hdas_config_load(const char* path, hdas_config** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    *out = new hdas_config{hdas::load_config(path)};
  });
}

hdas_status hdas_config_set(hdas_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config && key && value, "null argument");
    const std::string v(value);
    if (v.find('\n') != std::string::npos || v.find('#') != std::string::npos) {
      hdas::fail(hdas::ErrorKind::kInvalidArgument, "config value must be a single line without '#'");
    }
    config->config = hdas::parse_config(hdas::format_config(config->config) + key + " = " + v + "\n");
  });
}

hdas_status hdas_config_get(const hdas_config* config, const char* key, char** value) {
  return guarded([&] {
    require(config && key && value, "null argument");
    const std::string prefix = std::string(key) + " = ";
    std::istringstream in(hdas::format_config(config->config));
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind(prefix, 0) == 0) {
        *value = dup(line.substr(prefix.size()));
        return;
      }
    }
    hdas::fail(hdas::ErrorKind::kInvalidArgument, std::string("unknown config key '") + key + "'");
  });
}

hdas_status hdas_config_set_seed(hdas_config* config, uint64_t seed) {
  return guarded([&] {
    require(config != nullptr, "null config");
    hdas::apply_seed(config->config, seed);
  });
}

hdas_status hdas_config_format(const hdas_config* config, char** text) {
  return guarded([&] {
    require(config && text, "null argument");
    *text = dup(hdas::format_config(config->config));
  });
}

void hdas_config_free(hdas_config* config) { delete config; }

hdas_status hdas_dataset_load(const hdas_config* config, hdas_dataset** out) {
  return guarded([&] {
    require(config && out, "null argument");
    *out = nullptr;
    *out = new hdas_dataset{hdas::load_data(config->config.data)};
  });
}

hdas_status hdas_dataset_sizes(const hdas_dataset* data, int* train, int* test) {
  return guarded([&] {
    require(data != nullptr, "null dataset");
    if (train) *train = data->data.train.size();
    if (test) *test = data->data.test.size();
  });
}

void hdas_dataset_free(hdas_dataset* data) { delete data; }

hdas_status hdas_genotype_parse(const char* text, hdas_genotype** out, char** errors) {
  if (!text) return guarded([] { require(false, "null text"); });
  return parse_into(text, out, errors);
}

hdas_status hdas_genotype_load(const char* path, hdas_genotype** out, char** errors) {
  std::string text;
  const hdas_status st = guarded([&] {
    require(path != nullptr, "null path");
    std::ifstream in(path);
    if (!in) hdas::fail(hdas::ErrorKind::kIo, std::string("cannot open ") + path);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  });
  if (st != HDAS_OK) return st;
  return parse_into(text, out, errors);
}

hdas_status hdas_genotype_serialize(const hdas_genotype* g, char** text) {
  return guarded([&] {
    require(g && text, "null argument");
    *text = dup(hdas::serialize_genotype(g->genotype));
  });
}

hdas_status hdas_genotype_dot(const hdas_genotype* g, char** text) {
  return guarded([&] {
    require(g && text, "null argument");
    *text = dup(hdas::export_dot(g->genotype));
  });
}

hdas_status hdas_genotype_hash(const hdas_genotype* g, char** hash) {
  return guarded([&] {
    require(g && hash, "null argument");
    *hash = dup(hdas::genotype_hash(g->genotype));
  });
}

hdas_status hdas_genotype_cells_per_stage(const hdas_genotype* g, int counts[3]) {
  return guarded([&] {
    require(g && counts, "null argument");
    for (int s = 0; s < 3; ++s) counts[s] = g->genotype.cells_per_stage[static_cast<std::size_t>(s)];
  });
}

hdas_status hdas_genotype_stage_depths(const hdas_genotype* g, int depths[3]) {
  return guarded([&] {
    require(g && depths, "null argument");
    for (int s = 0; s < 3; ++s) {
      const int n = g->genotype.cells_per_stage[static_cast<std::size_t>(s)];
      depths[s] = g->genotype.stages ? hdas::stage_depth((*g->genotype.stages)[static_cast<std::size_t>(s)])
                                     : hdas::stage_depth(hdas::chain_stage(n, n + 1));
    }
  });
}

hdas_status hdas_genotype_random_stages(const hdas_genotype* base, int window, uint64_t seed, hdas_genotype** out) {
  return guarded([&] {
    require(base && out, "null argument");
    require(window >= 2, "window must be at least 2");
    *out = nullptr;
    *out = new hdas_genotype{hdas::sample_random_stages(base->genotype, window, seed)};
  });
}

void hdas_genotype_free(hdas_genotype* g) { delete g; }

hdas_status hdas_search_create(const hdas_config* config, const hdas_dataset* data, hdas_phase phase,
                               const hdas_genotype* cells, hdas_search** out) {
  return guarded([&] {
    require(config && data && out, "null argument");
    *out = nullptr;
    hdas::SearchConfig sc = config->config.search;
    switch (phase) {
      case HDAS_PHASE_CELLS: sc.phase = hdas::SearchPhase::kCells; break;
      case HDAS_PHASE_DISTRIBUTION: sc.phase = hdas::SearchPhase::kDistribution; break;
      case HDAS_PHASE_STAGES: sc.phase = hdas::SearchPhase::kStages; break;
      default: hdas::fail(hdas::ErrorKind::kInvalidArgument, "unknown search phase");
    }
    if (sc.phase != hdas::SearchPhase::kCells) {
      if (!cells) hdas::fail(hdas::ErrorKind::kInvalidArgument, "this phase needs a cell genotype");
      sc.normal = cells->genotype.normal;
      sc.reduction = cells->genotype.reduction;
      if (sc.phase == hdas::SearchPhase::kStages) sc.cells_per_stage = cells->genotype.cells_per_stage;
    }
    auto engine = std::make_unique<hdas::SearchEngine>(sc, data->data.search);
    *out = new hdas_search{std::move(engine)};
  });
}

hdas_status hdas_search_run_epoch(hdas_search* search, char** log_line) {
  return guarded([&] {
    require(search != nullptr, "null search");
    if (log_line) *log_line = nullptr;
    if (search->engine->done()) hdas::fail(hdas::ErrorKind::kInvalidArgument, "search already finished");
    const hdas::EpochRecord r = search->engine->run_epoch();
    if (log_line) *log_line = dup(hdas::format_log_line(search->engine->config().phase, r));
  });
}

hdas_status hdas_search_progress(const hdas_search* search, int* epoch, int* epochs) {
  return guarded([&] {
    require(search != nullptr, "null search");
    if (epoch) *epoch = search->engine->epoch();
    if (epochs) *epochs = search->engine->config().epochs;
  });
}

hdas_status hdas_search_log(const hdas_search* search, char** text) {
  return guarded([&] {
    require(search && text, "null argument");
    *text = dup(search->engine->log_text());
  });
}

hdas_status hdas_search_genotype(const hdas_search* search, hdas_genotype** out) {
  return guarded([&] {
    require(search && out, "null argument");
    *out = nullptr;
    *out = new hdas_genotype{search->engine->derived_genotype()};
  });
}

hdas_status hdas_search_save(const hdas_search* search, const char* path) {
  return guarded([&] {
    require(search && path, "null argument");
    search->engine->save_checkpoint(std::string(path));
  });
}

hdas_status hdas_search_load(hdas_search* search, const char* path) {
  return guarded([&] {
    require(search && path, "null argument");
    search->engine->load_checkpoint(std::string(path));
  });
}

void hdas_search_free(hdas_search* search) { delete search; }

hdas_status hdas_train(const hdas_config* config, const hdas_dataset* data, const hdas_genotype* g, uint64_t seed,
                       hdas_train_result* result) {
  return guarded([&] {
    require(config && data && g && result, "null argument");
    const auto errors = hdas::validate_genotype(g->genotype);
    if (!errors.empty()) hdas::fail(hdas::ErrorKind::kValidation, format_errors(errors));
    hdas::EvalConfig ec = config->config.eval;
    ec.seed = seed;
    auto net = hdas::build_network(g->genotype, seed, data->data.train.channels());
    const hdas::TrainResult r = hdas::train_eval(*net, data->data.train, data->data.test, ec);
    result->test_accuracy = r.test_accuracy;
    result->final_train_loss = r.train_loss.empty() ? 0.0 : r.train_loss.back();
    result->params = r.params;
    result->epochs = ec.epochs;
  });
}

hdas_status hdas_result_line(uint64_t seed, const hdas_genotype* g, const hdas_train_result* result, char** line) {
  return guarded([&] {
    require(g && result && line, "null argument");
    hdas::TrainResult r;
    r.test_accuracy = result->test_accuracy;
    r.params = result->params;
    *line = dup(hdas::format_result_line(seed, g->genotype, r, result->epochs));
  });
}

hdas_status hdas_relative_improvement(double acc_method, double acc_random, double* ri) {
  return guarded([&] {
    require(ri != nullptr, "null output pointer");
    *ri = hdas::relative_improvement(acc_method, acc_random);
  });
}

hdas_status hdas_count_space(int kind, int n_nodes, int n_ops, int window, int n_min, int n_instances,
                             char** decimal) {
  return guarded([&] {
    require(decimal != nullptr, "null output pointer");
    require(kind >= 0 && kind <= 2, "kind must be 0 (cell), 1 (stage) or 2 (distribution)");
    require(n_nodes >= 1 && n_ops >= 1 && n_instances >= 1 && window >= 0, "counts must be positive");
    hdas::SearchSpaceSpec spec;
    spec.kind = static_cast<hdas::SpaceKind>(kind);
    spec.n_nodes = n_nodes;
    spec.n_ops = n_ops;
    spec.window_m = window;
    spec.n_min = n_min;
    spec.n_instances = n_instances;
    *decimal = dup(hdas::count_space(spec).str());
  });
}

hdas_status hdas_analyze_space(char** report, int* all_pass) {
  return guarded([&] {
    require(report != nullptr, "null output pointer");
    const hdas::MagnitudeReport r = hdas::verify_magnitudes();
    *report = dup(hdas::format_report(r));
    if (all_pass) *all_pass = r.all_pass ? 1 : 0;
  });
}

hdas_status hdas_grad_check(const uint64_t* seeds, size_t n_seeds, char** report, int* all_pass) {
  return guarded([&] {
    require(seeds && n_seeds > 0 && report, "null argument");
    const auto cases = hdas::run_gradient_suite(std::vector<std::uint64_t>(seeds, seeds + n_seeds));
    *report = dup(hdas::format_gradient_suite(cases));
    bool ok = true;
    for (const auto& c : cases) ok = ok && c.report.pass;
    if (all_pass) *all_pass = ok ? 1 : 0;
  });
}

}  // extern "C"
