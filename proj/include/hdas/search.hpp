#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "hdas/data.hpp"
#include "hdas/network.hpp"
#include "hdas/optim.hpp"

namespace hdas {

enum class SearchPhase { kCells, kDistribution, kStages };

std::string_view phase_name(SearchPhase phase);

struct SearchConfig {
  SearchPhase phase = SearchPhase::kCells;
  int epochs = 50;
  int batch_size = 64;
  int init_channels = 8;
  int n_intermediate = 4;
  int multiplier = 4;
  bool stage_specific_cells = true;
  /// Cells per stage: the chain length in the cells phase, the target count
  /// in the distribution phase (searched with `extra_cells` more), and the
  /// fixed count in the stages phase.
  std::array<int, 3> cells_per_stage{2, 2, 2};
  int extra_cells = 2;
  int window_m = 3;
  int n_min = 4;
  SgdConfig weight_opt{0.025, 0.9, 2.7e-3, 5.0};
  AdamConfig arch_opt{};
  double delta = 1.0;
  double gamma = 0.0;
  std::vector<double> theta{1.0, 1.0, 1.0};
  bool normalize_window = true;
  std::uint64_t seed = 0;
  /// Frozen cells for the distribution and stages phases.
  std::vector<CellGenotype> normal;
  std::vector<CellGenotype> reduction;
};

/// Supernet structure for a phase.
NetworkSpec search_network_spec(const SearchConfig& config, int in_channels, int num_classes);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double depth_loss = 0.0;
  double comp_loss = 0.0;
};

std::string format_log_line(SearchPhase phase, const EpochRecord& r);

/// First-order bi-level search over one phase: each step takes one Adam
/// step on the architecture parameters (total loss on an architecture-half
/// batch), then one SGD step on the weights (classification loss on a
/// weight-half batch).
class SearchEngine {
 public:
  SearchEngine(SearchConfig config, const Dataset& data);

  /// One bi-level step on explicit batches.
  void search_step(const Tensor& weight_x, const std::vector<int>& weight_y, const Tensor& arch_x,
                   const std::vector<int>& arch_y);
  EpochRecord run_epoch();
  std::vector<EpochRecord> run();

  bool done() const { return epoch_ >= config_.epochs; }
  int epoch() const { return epoch_; }
  long step_count() const { return step_; }
  long steps_per_epoch() const;
  double current_lr() const;

  Network& network() { return *net_; }
  const SearchConfig& config() const { return config_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  std::string log_text() const;

  /// Derived results of the phase.
  std::vector<CellGenotype> derived_normal() const { return net_->derive_normal(); }
  std::vector<CellGenotype> derived_reduction() const { return net_->derive_reduction(); }
  std::array<int, 3> derived_retained() const { return net_->derive_retained(); }
  std::array<StageGenotype, 3> derived_stages() const;
  /// Complete genotype of the phase: searched cells with chain stages, the
  /// frozen cells with stages truncated to the retained counts, or the
  /// frozen cells with re-searched stages.
  Genotype derived_genotype() const;

  void save_checkpoint(std::ostream& out) const;
  void load_checkpoint(std::istream& in);
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  std::pair<Tensor, std::vector<int>> next_arch_batch();

  SearchConfig config_;
  const Dataset& data_;
  std::unique_ptr<Network> net_;
  std::vector<int> weight_half_, arch_half_;
  std::vector<Parameter*> weight_params_, arch_params_;
  std::unique_ptr<Sgd> sgd_;
  std::unique_ptr<Adam> adam_;
  Rng rng_;
  std::vector<int> arch_order_;
  std::size_t arch_cursor_ = 0;
  int epoch_ = 0;
  long step_ = 0;
  std::vector<EpochRecord> history_;
  // Running sums for the epoch in progress.
  double sum_train_ = 0.0, sum_val_ = 0.0, sum_depth_ = 0.0, sum_comp_ = 0.0;
  long n_correct_ = 0, n_val_ = 0, n_steps_ = 0;
};

}  // namespace hdas
