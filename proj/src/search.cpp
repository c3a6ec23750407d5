#include "hdas/search.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hdas/error.hpp"

namespace hdas {

namespace {

constexpr char kMagic[] = "HDAS1";

int count_correct(const Tensor& logits, const std::vector<int>& labels) {
  const int n = logits.dim(0), k = logits.dim(1);
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits.ptr() + static_cast<std::size_t>(i) * k;
    int best = 0;
    for (int j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    correct += best == labels[static_cast<std::size_t>(i)];
  }
  return correct;
}

// Names the first parameter of a group holding a non-finite value or gradient.
std::string find_non_finite(const std::vector<Parameter*>& group) {
  for (const Parameter* p : group) {
    if (!p->value.all_finite()) return p->name + " (value)";
    if (!p->grad.all_finite()) return p->name + " (gradient)";
  }
  return "";
}

[[noreturn]] void numeric_fault(const char* step, const std::vector<Parameter*>& weights,
                                const std::vector<Parameter*>& arch) {
  std::string msg = std::string("non-finite loss in ") + step + " step";
  const std::string w = find_non_finite(weights), a = find_non_finite(arch);
  if (!a.empty()) msg += "; parameter group 'architecture' holds non-finite " + a;
  if (!w.empty()) msg += "; parameter group 'weights' holds non-finite " + w;
  if (a.empty() && w.empty()) {
    msg += std::string("; parameters are finite, fault raised by the ") +
           (std::string(step) == "architecture" ? "architecture" : "weight") + " group's forward pass";
  }
  fail(ErrorKind::kNumeric, msg);
}

void check_grads(const char* step, const std::vector<Parameter*>& group, const char* group_name) {
  const std::string bad = find_non_finite(group);
  if (!bad.empty()) {
    fail(ErrorKind::kNumeric, std::string("non-finite gradient in ") + step + " step; parameter group '" +
                                  group_name + "' holds non-finite " + bad);
  }
}

}  // namespace

std::string_view phase_name(SearchPhase phase) {
  switch (phase) {
    case SearchPhase::kCells:
      return "cells";
    case SearchPhase::kDistribution:
      return "distribution";
    case SearchPhase::kStages:
      return "stages";
  }
  return "?";
}

NetworkSpec search_network_spec(const SearchConfig& config, int in_channels, int num_classes) {
  NetworkSpec spec;
  spec.init_channels = config.init_channels;
  spec.num_classes = num_classes;
  spec.in_channels = in_channels;
  spec.n_intermediate = config.n_intermediate;
  spec.multiplier = config.multiplier;
  spec.cells_per_stage = config.cells_per_stage;
  spec.window_m = config.window_m;
  spec.n_min = config.n_min;
  if (config.phase == SearchPhase::kCells) {
    spec.cells = config.stage_specific_cells ? CellSource::kSearchStageSpecific : CellSource::kSearchShared;
    spec.stages = StageSource::kChain;
    return spec;
  }
  if (config.normal.empty() || config.reduction.empty()) {
    fail(ErrorKind::kInvalidArgument, std::string(phase_name(config.phase)) + " phase needs searched cells");
  }
  spec.cells = CellSource::kGenotype;
  spec.normal = config.normal;
  spec.reduction = config.reduction;
  spec.multiplier = config.normal[0].multiplier();
  spec.n_intermediate = config.normal[0].n_intermediate();
  if (config.phase == SearchPhase::kDistribution) {
    spec.stages = StageSource::kDistribution;
    for (int& n : spec.cells_per_stage) n += config.extra_cells;
    for (int s = 0; s < 3; ++s) {
      if (config.n_min > spec.cells_per_stage[static_cast<std::size_t>(s)]) {
        fail(ErrorKind::kInvalidArgument, "distribution phase: n_min exceeds the searched cell count");
      }
    }
  } else {
    spec.stages = StageSource::kSupernet;
  }
  return spec;
}

std::string format_log_line(SearchPhase phase, const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f,%.6f,%.6f", r.epoch, std::string(phase_name(phase)).c_str(),
                r.train_loss, r.val_loss, r.val_acc, r.depth_loss, r.comp_loss);
  return buf;
}

SearchEngine::SearchEngine(SearchConfig config, const Dataset& data)
    : config_(std::move(config)), data_(data), rng_(mix_seed(config_.seed, "search.rng")) {
  if (config_.epochs < 1 || config_.batch_size < 2) {
    fail(ErrorKind::kInvalidArgument, "search: epochs must be >= 1 and batch_size >= 2");
  }
  if (config_.theta.size() != 3) fail(ErrorKind::kInvalidArgument, "search: theta needs one weight per stage");
  net_ = std::make_unique<Network>(search_network_spec(config_, data.channels(), data.num_classes),
                                   mix_seed(config_.seed, "search.init"));
  std::tie(weight_half_, arch_half_) = split_data(data.size(), config_.seed);
  if (static_cast<int>(weight_half_.size()) < config_.batch_size ||
      static_cast<int>(arch_half_.size()) < config_.batch_size) {
    fail(ErrorKind::kInvalidArgument, "search: each data half must hold at least one batch");
  }
  for (const auto& p : net_->weights().params()) weight_params_.push_back(p.get());
  for (const auto& p : net_->arch().params()) arch_params_.push_back(p.get());
  sgd_ = std::make_unique<Sgd>(weight_params_, config_.weight_opt);
  adam_ = std::make_unique<Adam>(arch_params_, config_.arch_opt);
}

long SearchEngine::steps_per_epoch() const {
  return static_cast<long>(weight_half_.size()) / config_.batch_size;
}

double SearchEngine::current_lr() const {
  return cosine_lr(config_.weight_opt.lr, step_, steps_per_epoch() * config_.epochs);
}

std::pair<Tensor, std::vector<int>> SearchEngine::next_arch_batch() {
  std::vector<int> idx;
  for (int k = 0; k < config_.batch_size; ++k) {
    if (arch_cursor_ >= arch_order_.size()) {
      arch_order_ = arch_half_;
      for (int i = static_cast<int>(arch_order_.size()) - 1; i > 0; --i) {
        std::swap(arch_order_[static_cast<std::size_t>(i)], arch_order_[static_cast<std::size_t>(rng_.uniform_int(i + 1))]);
      }
      arch_cursor_ = 0;
    }
    idx.push_back(arch_order_[arch_cursor_++]);
  }
  return data_.batch(idx);
}

void SearchEngine::search_step(const Tensor& weight_x, const std::vector<int>& weight_y,
                               const Tensor& arch_x, const std::vector<int>& arch_y) {
  if (!arch_params_.empty()) {
    net_->arch().zero_grad();
    Graph g;
    ForwardCtx ctx(g, true);
    ctx.freeze(net_->weights());
    Var logits = net_->forward(ctx, g.constant(arch_x));
    Var cls = cross_entropy(logits, arch_y);
    Var depth = net_->depth_loss(ctx, config_.normalize_window);
    Var comp = net_->complexity_loss(ctx, config_.theta);
    Var loss = total_loss(cls, depth, comp, config_.delta, config_.gamma);
    if (!std::isfinite(loss.value().item())) numeric_fault("architecture", weight_params_, arch_params_);
    g.backward(loss);
    check_grads("architecture", arch_params_, "architecture");
    adam_->step();
    sum_val_ += cls.value().item();
    sum_depth_ += depth.value().item();
    sum_comp_ += comp.value().item();
    n_correct_ += count_correct(logits.value(), arch_y);
    n_val_ += static_cast<long>(arch_y.size());
  }
  net_->weights().zero_grad();
  Graph g;
  ForwardCtx ctx(g, true);
  ctx.freeze(net_->arch());
  Var loss = cross_entropy(net_->forward(ctx, g.constant(weight_x)), weight_y);
  if (!std::isfinite(loss.value().item())) numeric_fault("weight", weight_params_, arch_params_);
  g.backward(loss);
  check_grads("weight", weight_params_, "weights");
  sgd_->step(current_lr());
  sum_train_ += loss.value().item();
  ++n_steps_;
  ++step_;
}

EpochRecord SearchEngine::run_epoch() {
  if (done()) fail(ErrorKind::kInvalidArgument, "search: all epochs already run");
  std::vector<int> order = weight_half_;
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng_.uniform_int(i + 1))]);
  }
  sum_train_ = sum_val_ = sum_depth_ = sum_comp_ = 0.0;
  n_correct_ = n_val_ = n_steps_ = 0;
  const long steps = steps_per_epoch();
  for (long s = 0; s < steps; ++s) {
    std::vector<int> idx(order.begin() + s * config_.batch_size, order.begin() + (s + 1) * config_.batch_size);
    auto [wx, wy] = data_.batch(idx);
    auto [ax, ay] = next_arch_batch();
    search_step(wx, wy, ax, ay);
  }
  EpochRecord r;
  r.epoch = epoch_;
  r.train_loss = sum_train_ / static_cast<double>(n_steps_);
  if (n_val_ > 0) {
    r.val_loss = sum_val_ / static_cast<double>(n_steps_);
    r.val_acc = static_cast<double>(n_correct_) / static_cast<double>(n_val_);
    r.depth_loss = sum_depth_ / static_cast<double>(n_steps_);
    r.comp_loss = sum_comp_ / static_cast<double>(n_steps_);
  }
  history_.push_back(r);
  ++epoch_;
  return r;
}

std::vector<EpochRecord> SearchEngine::run() {
  while (!done()) run_epoch();
  return history_;
}

std::string SearchEngine::log_text() const {
  std::string out = "epoch,phase,train_loss,val_loss,val_acc,L_depth,L_comp\n";
  for (const EpochRecord& r : history_) out += format_log_line(config_.phase, r) + "\n";
  return out;
}

std::array<StageGenotype, 3> SearchEngine::derived_stages() const {
  return net_->derive_stages(net_->spec().cells_per_stage);
}

Genotype SearchEngine::derived_genotype() const {
  Genotype g;
  g.init_channels = net_->spec().init_channels;
  g.num_classes = net_->spec().num_classes;
  g.cells_per_stage = config_.cells_per_stage;
  g.source = config_.seed;
  switch (config_.phase) {
    case SearchPhase::kCells:
      g.normal = derived_normal();
      g.reduction = derived_reduction();
      break;
    case SearchPhase::kDistribution:
      g.normal = config_.normal;
      g.reduction = config_.reduction;
      g.cells_per_stage = derived_retained();
      g.stages = net_->derive_stages(g.cells_per_stage);
      break;
    case SearchPhase::kStages:
      g.normal = config_.normal;
      g.reduction = config_.reduction;
      g.stages = derived_stages();
      break;
  }
  return g;
}

void SearchEngine::save_checkpoint(std::ostream& out) const {
  out.write(kMagic, 5);
  write_u64(out, static_cast<std::uint64_t>(config_.phase));
  write_u64(out, static_cast<std::uint64_t>(epoch_));
  write_u64(out, static_cast<std::uint64_t>(step_));
  write_string(out, rng_.state());
  write_u64(out, arch_cursor_);
  write_u64(out, arch_order_.size());
  for (int i : arch_order_) write_u64(out, static_cast<std::uint64_t>(i));
  for (const ParamStore* store : {&net_->weights(), &net_->arch()}) {
    write_u64(out, store->params().size());
    for (const auto& p : store->params()) {
      write_string(out, p->name);
      write_tensor(out, p->value);
    }
    write_u64(out, store->stats().size());
    for (const auto& [name, st] : store->stats()) {
      write_string(out, name);
      write_tensor(out, st->mean);
      write_tensor(out, st->var);
    }
  }
  sgd_->save(out);
  adam_->save(out);
  write_u64(out, history_.size());
  for (const EpochRecord& r : history_) {
    write_u64(out, static_cast<std::uint64_t>(r.epoch));
    for (double v : {r.train_loss, r.val_loss, r.val_acc, r.depth_loss, r.comp_loss}) write_f64(out, v);
  }
}

void SearchEngine::load_checkpoint(std::istream& in) {
  char magic[5];
  if (!in.read(magic, 5) || std::string(magic, 5) != kMagic) fail(ErrorKind::kIo, "checkpoint: bad magic");
  if (read_u64(in) != static_cast<std::uint64_t>(config_.phase)) fail(ErrorKind::kIo, "checkpoint: phase mismatch");
  epoch_ = static_cast<int>(read_u64(in));
  step_ = static_cast<long>(read_u64(in));
  rng_.set_state(read_string(in));
  arch_cursor_ = read_u64(in);
  arch_order_.resize(read_u64(in));
  for (int& i : arch_order_) i = static_cast<int>(read_u64(in));
  if (arch_cursor_ > arch_order_.size()) fail(ErrorKind::kIo, "checkpoint: corrupt data cursor");
  for (ParamStore* store : {&net_->weights(), &net_->arch()}) {
    if (read_u64(in) != store->params().size()) fail(ErrorKind::kIo, "checkpoint: parameter count mismatch");
    for (const auto& p : store->params()) {
      if (read_string(in) != p->name) fail(ErrorKind::kIo, "checkpoint: parameter order mismatch at " + p->name);
      read_tensor(in, p->value, p->name);
    }
    if (read_u64(in) != store->stats().size()) fail(ErrorKind::kIo, "checkpoint: statistics count mismatch");
    for (const auto& [name, st] : store->stats()) {
      if (read_string(in) != name) fail(ErrorKind::kIo, "checkpoint: statistics order mismatch at " + name);
      read_tensor(in, st->mean, name + ".mean");
      read_tensor(in, st->var, name + ".var");
    }
  }
  sgd_->load(in);
  adam_->load(in);
  history_.resize(read_u64(in));
  for (EpochRecord& r : history_) {
    r.epoch = static_cast<int>(read_u64(in));
    for (double* v : {&r.train_loss, &r.val_loss, &r.val_acc, &r.depth_loss, &r.comp_loss}) *v = read_f64(in);
  }
}

void SearchEngine::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write checkpoint " + path);
  save_checkpoint(out);
  if (!out) fail(ErrorKind::kIo, "failed writing checkpoint " + path);
}

void SearchEngine::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open checkpoint " + path);
  load_checkpoint(in);
}

}  // namespace hdas
