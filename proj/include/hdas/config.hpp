#pragma once

#include <string>

#include "hdas/data.hpp"
#include "hdas/eval.hpp"
#include "hdas/search.hpp"

namespace hdas {

struct DataConfig {
  std::string kind = "toy";  // toy | cifar10
  std::string train_path;    // cifar10 batch files
  std::string test_path;
  int image_size = 16;
  int train_size = 2048;
  int test_size = 512;
  double noise = 0.1;
  std::uint64_t seed = 0;
  int search_subset = 512;  // leading training samples used for search; 0 = all
};

struct LoadedData {
  Dataset train;
  Dataset test;
  Dataset search;  // leading search_subset samples of train
};

/// Builds the toy set or reads CIFAR-10 batches (train_path may list several
/// files separated by commas). For CIFAR-10 the sizes cap the number of
/// leading records used; 0 keeps all of them.
LoadedData load_data(const DataConfig& config);

/// Flat `section.key = value` configuration. Every key has a default and
/// unknown keys are rejected.
struct Config {
  DataConfig data;
  SearchConfig search;
  EvalConfig eval;
  int random_samples = 5;
  std::string output_dir = "out";
};

/// Parses config text on top of the defaults. Errors carry line numbers.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);
/// Renders every key with its current value, in parseable form.
std::string format_config(const Config& config);
/// Sets the run seed of the search and eval sections. The dataset keeps its
/// own seed so that runs with different seeds share the same data.
void apply_seed(Config& config, std::uint64_t seed);

}  // namespace hdas
