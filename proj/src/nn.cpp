#include "hdas/nn.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "hdas/error.hpp"

namespace hdas {

double Rng::normal() {
  // Box-Muller; u1 kept away from 0.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int n) {
  if (n <= 0) fail(ErrorKind::kInvalidArgument, "uniform_int: n must be positive");
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return static_cast<int>(v % range);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (!is) fail(ErrorKind::kIo, "corrupt RNG state");
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& salt) {
  std::uint64_t z = seed ^ fnv1a64(salt);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  return *params_.back();
}

Parameter& ParamStore::add_kaiming(const std::string& name, Shape shape, int fan_in) {
  Rng rng(mix_seed(seed_, name));
  Tensor t(std::move(shape));
  const double sd = std::sqrt(2.0 / fan_in);
  for (double& v : t.data()) v = sd * rng.normal();
  return add(name, std::move(t));
}

Parameter& ParamStore::add_logits(const std::string& name, Shape shape) {
  Rng rng(mix_seed(seed_, name));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = 1e-3 * rng.normal();
  return add(name, std::move(t));
}

RunningStats& ParamStore::add_stats(const std::string& name, int channels) {
  stats_.emplace_back(name, std::make_unique<RunningStats>(channels));
  return *stats_.back().second;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Var ForwardCtx::bind(Parameter& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return it->second;
  Var v = frozen_.count(&p) ? graph_.constant(p.value) : graph_.parameter(p);
  bound_.emplace(&p, v);
  return v;
}

void ForwardCtx::freeze(const ParamStore& store) {
  for (const auto& p : store.params()) frozen_.insert(p.get());
}

BatchNorm::BatchNorm(ParamStore& store, const std::string& name, int channels)
    : gamma_(&store.add(name + ".gamma", Tensor({channels}, 1.0))),
      beta_(&store.add(name + ".beta", Tensor({channels}, 0.0))),
      stats_(&store.add_stats(name, channels)) {}

Var BatchNorm::forward(ForwardCtx& ctx, Var x) {
  return batch_norm(x, ctx.bind(*gamma_), ctx.bind(*beta_), *stats_, ctx.training());
}

Conv::Conv(ParamStore& store, const std::string& name, int c_in, int c_out, int kernel,
           Conv2dAttrs attrs)
    : weight_(&store.add_kaiming(name + ".weight", {c_out, c_in / attrs.groups, kernel, kernel},
                                 c_in / attrs.groups * kernel * kernel)),
      attrs_(attrs) {}

Var Conv::forward(ForwardCtx& ctx, Var x) { return conv2d(x, ctx.bind(*weight_), attrs_); }

ReluConvBn::ReluConvBn(ParamStore& store, const std::string& name, int c_in, int c_out,
                       int kernel, int stride)
    : conv_(store, name + ".conv", c_in, c_out, kernel, {stride, 1, 1}),
      bn_(store, name + ".bn", c_out) {}

Var ReluConvBn::forward(ForwardCtx& ctx, Var x) {
  return bn_.forward(ctx, conv_.forward(ctx, relu(x)));
}

FactorizedReduce::FactorizedReduce(ParamStore& store, const std::string& name, int c_in,
                                   int c_out)
    : conv_a_(store, name + ".conv_a", c_in, c_out / 2, 1, {2, 1, 1}),
      conv_b_(store, name + ".conv_b", c_in, c_out - c_out / 2, 1, {2, 1, 1}),
      bn_(store, name + ".bn", c_out) {
  if (c_out < 2) fail(ErrorKind::kInvalidArgument, name + ": factorized reduce needs c_out >= 2");
}

Var FactorizedReduce::forward(ForwardCtx& ctx, Var x) {
  Var r = relu(x);
  Var a = conv_a_.forward(ctx, r);
  Var b = conv_b_.forward(ctx, crop(r, 1, 1));
  return bn_.forward(ctx, concat_channels({a, b}));
}

SepConv::SepConv(ParamStore& store, const std::string& name, int channels, int kernel, int stride)
    : dw1_(store, name + ".dw1", channels, channels, kernel, {stride, 1, channels}),
      pw1_(store, name + ".pw1", channels, channels, 1, {1, 1, 1}),
      bn1_(store, name + ".bn1", channels),
      dw2_(store, name + ".dw2", channels, channels, kernel, {1, 1, channels}),
      pw2_(store, name + ".pw2", channels, channels, 1, {1, 1, 1}),
      bn2_(store, name + ".bn2", channels) {}

Var SepConv::forward(ForwardCtx& ctx, Var x) {
  Var y = bn1_.forward(ctx, pw1_.forward(ctx, dw1_.forward(ctx, relu(x))));
  return bn2_.forward(ctx, pw2_.forward(ctx, dw2_.forward(ctx, relu(y))));
}

DilConv::DilConv(ParamStore& store, const std::string& name, int channels, int kernel, int stride)
    : dw_(store, name + ".dw", channels, channels, kernel, {stride, 2, channels}),
      pw_(store, name + ".pw", channels, channels, 1, {1, 1, 1}),
      bn_(store, name + ".bn", channels) {}

Var DilConv::forward(ForwardCtx& ctx, Var x) {
  return bn_.forward(ctx, pw_.forward(ctx, dw_.forward(ctx, relu(x))));
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out)
    : weight_(&store.add_kaiming(name + ".weight", {out, in}, 2 * in)),
      bias_(&store.add(name + ".bias", Tensor({out}, 0.0))) {}

Var Linear::forward(ForwardCtx& ctx, Var x) {
  return linear(x, ctx.bind(*weight_), ctx.bind(*bias_));
}

}  // namespace hdas
