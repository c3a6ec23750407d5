#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hdas/autodiff.hpp"

namespace hdas {

/// Seeded engine with library-independent uniform/normal draws, so that
/// trajectories do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal();
  /// Uniform integer in [0, n).
  int uniform_int(int n);

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

/// Stable 64-bit mix of a seed and a string (FNV-1a then splitmix).
std::uint64_t mix_seed(std::uint64_t seed, const std::string& salt);
std::uint64_t fnv1a64(const std::string& text);

/// Owns parameters and batch-norm buffers in declaration order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Parameter& add(const std::string& name, Tensor init);
  /// Kaiming-normal init with std sqrt(2 / fan_in), seeded by (seed, name).
  Parameter& add_kaiming(const std::string& name, Shape shape, int fan_in);
  /// 1e-3 * standard normal, seeded by (seed, name).
  Parameter& add_logits(const std::string& name, Shape shape);
  RunningStats& add_stats(const std::string& name, int channels);

  const std::vector<std::unique_ptr<Parameter>>& params() const { return params_; }
  const std::vector<std::pair<std::string, std::unique_ptr<RunningStats>>>& stats() const {
    return stats_;
  }
  std::size_t numel() const;
  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<RunningStats>>> stats_;
};

/// Per-forward-pass state: the graph, train/eval mode, and parameter bindings
/// so that each Parameter enters a graph exactly once.
class ForwardCtx {
 public:
  ForwardCtx(Graph& g, bool training) : graph_(g), training_(training) {}

  Graph& graph() { return graph_; }
  bool training() const { return training_; }
  Var bind(Parameter& p);
  /// Binds the store's parameters as constants: no gradient flows to them.
  void freeze(const ParamStore& store);

 private:
  Graph& graph_;
  bool training_;
  std::unordered_map<const Parameter*, Var> bound_;
  std::unordered_set<const Parameter*> frozen_;
};

class Module {
 public:
  virtual ~Module() = default;
  virtual Var forward(ForwardCtx& ctx, Var x) = 0;
};

class BatchNorm final : public Module {
 public:
  BatchNorm(ParamStore& store, const std::string& name, int channels);
  Var forward(ForwardCtx& ctx, Var x) override;

 private:
  Parameter* gamma_;
  Parameter* beta_;
  RunningStats* stats_;
};

class Conv final : public Module {
 public:
  Conv(ParamStore& store, const std::string& name, int c_in, int c_out, int kernel,
       Conv2dAttrs attrs);
  Var forward(ForwardCtx& ctx, Var x) override;

 private:
  Parameter* weight_;
  Conv2dAttrs attrs_;
};

/// ReLU -> conv -> BN.
class ReluConvBn final : public Module {
 public:
  ReluConvBn(ParamStore& store, const std::string& name, int c_in, int c_out, int kernel,
             int stride);
  Var forward(ForwardCtx& ctx, Var x) override;

 private:
  Conv conv_;
  BatchNorm bn_;
};

/// ReLU -> two offset stride-2 1x1 convs -> concat -> BN. Halves resolution.
class FactorizedReduce final : public Module {
 public:
  FactorizedReduce(ParamStore& store, const std::string& name, int c_in, int c_out);
  Var forward(ForwardCtx& ctx, Var x) override;

 private:
  Conv conv_a_;
  Conv conv_b_;
  BatchNorm bn_;
};

/// (ReLU -> depthwise kxk -> pointwise -> BN) twice; only the first
/// depthwise conv carries the stride.
class SepConv final : public Module {
 public:
  SepConv(ParamStore& store, const std::string& name, int channels, int kernel, int stride);
  Var forward(ForwardCtx& ctx, Var x) override;

 private:
  Conv dw1_, pw1_;
  BatchNorm bn1_;
  Conv dw2_, pw2_;
  BatchNorm bn2_;
};

/// ReLU -> dilated depthwise kxk (dilation 2) -> pointwise -> BN.
class DilConv final : public Module {
 public:
  DilConv(ParamStore& store, const std::string& name, int channels, int kernel, int stride);
  Var forward(ForwardCtx& ctx, Var x) override;

 private:
  Conv dw_, pw_;
  BatchNorm bn_;
};

class Linear final : public Module {
 public:
  Linear(ParamStore& store, const std::string& name, int in, int out);
  Var forward(ForwardCtx& ctx, Var x) override;

 private:
  Parameter* weight_;
  Parameter* bias_;
};

}  // namespace hdas
