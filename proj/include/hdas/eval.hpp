#pragma once

#include <string>
#include <vector>

#include "hdas/data.hpp"
#include "hdas/network.hpp"
#include "hdas/optim.hpp"

namespace hdas {

struct EvalConfig {
  int epochs = 60;
  int batch_size = 128;
  SgdConfig sgd{0.025, 0.9, 3e-4, 5.0};
  std::uint64_t seed = 0;
};

struct TrainResult {
  double test_accuracy = 0.0;
  std::vector<double> train_loss;  // mean loss per epoch
  std::size_t params = 0;
};

/// Builds the discrete network of a genotype with seeded initialization.
std::unique_ptr<Network> build_network(const Genotype& g, std::uint64_t seed, int in_channels = 3);

/// Top-1 accuracy with batch norm in eval mode.
double evaluate(Network& net, const Dataset& data, int batch_size = 256);

/// Trains from scratch with cosine-annealed momentum SGD, then evaluates.
TrainResult train_eval(Network& net, const Dataset& train, const Dataset& test, const EvalConfig& config);

/// 100 * (acc_method - acc_random) / acc_random.
double relative_improvement(double acc_method, double acc_random);

struct RandomGenotypeSpec {
  int n_intermediate = 4;
  int multiplier = 4;
  int n_normal = 3;
  int n_reduction = 2;
  std::array<int, 3> cells_per_stage{2, 2, 2};
  int window_m = 3;
  int init_channels = 8;
  int num_classes = 4;
};

/// Uniform over valid discrete choices: two distinct predecessors per node
/// (within the window for stage cells) and a uniform non-none op per edge.
Genotype sample_random_genotype(const RandomGenotypeSpec& spec, std::uint64_t seed);
/// Keeps the cells of `base` and samples only the stage DAGs.
Genotype sample_random_stages(const Genotype& base, int window_m, std::uint64_t seed);

/// `seed,genotype_hash,test_acc,params,epochs`.
std::string format_result_line(std::uint64_t seed, const Genotype& g, const TrainResult& r, int epochs);

}  // namespace hdas
