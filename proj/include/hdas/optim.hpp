#pragma once

#include <iosfwd>
#include <vector>

#include "hdas/autodiff.hpp"

namespace hdas {

struct SgdConfig {
  double lr = 0.025;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  double grad_clip = 5.0;  // global L2 norm; <= 0 disables
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double weight_decay = 1e-3;
  double eps = 1e-8;
};

/// lr0 * (1 + cos(pi * step / total)) / 2, reaching exactly 0 at `total`.
double cosine_lr(double lr0, long step, long total);

/// Momentum SGD with L2 weight decay added to the (clipped) gradient.
class Sgd {
 public:
  Sgd(std::vector<Parameter*> params, SgdConfig config);
  /// Returns the pre-clip gradient norm.
  double step(double lr);

  const std::vector<Parameter*>& params() const { return params_; }
  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  std::vector<Parameter*> params_;
  SgdConfig config_;
  std::vector<Tensor> velocity_;
};

/// Adam with L2 weight decay added to the gradient.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);
  void step();

  const std::vector<Parameter*>& params() const { return params_; }
  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

// Little-endian length-prefixed binary helpers shared by checkpoints.
void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);
void write_f64(std::ostream& out, double v);
double read_f64(std::istream& in);
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in);
void write_tensor(std::ostream& out, const Tensor& t);
/// Reads into `t`, which must already have the stored shape.
void read_tensor(std::istream& in, Tensor& t, const std::string& what);

}  // namespace hdas
