#include "hdas/optim.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include "hdas/error.hpp"

namespace hdas {

double cosine_lr(double lr0, long step, long total) {
  if (total <= 0) return lr0;
  if (step >= total) return 0.0;
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

Sgd::Sgd(std::vector<Parameter*> params, SgdConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) velocity_.emplace_back(p->value.shape(), 0.0);
}

double Sgd::step(double lr) {
  double sq = 0.0;
  for (const Parameter* p : params_) {
    for (double g : p->grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = config_.grad_clip > 0.0 && norm > config_.grad_clip ? config_.grad_clip / (norm + 1e-6) : 1.0;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Tensor& buf = velocity_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double d = clip * p.grad[i] + config_.weight_decay * p.value[i];
      buf[i] = config_.momentum * buf[i] + d;
      p.value[i] -= lr * buf[i];
    }
  }
  return norm;
}

void Sgd::save(std::ostream& out) const {
  write_u64(out, velocity_.size());
  for (const Tensor& t : velocity_) write_tensor(out, t);
}

void Sgd::load(std::istream& in) {
  if (read_u64(in) != velocity_.size()) fail(ErrorKind::kIo, "checkpoint: SGD state size mismatch");
  for (Tensor& t : velocity_) read_tensor(in, t, "sgd momentum");
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] + config_.weight_decay * p.value[i];
      m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * g;
      v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * g * g;
      const double denom = std::sqrt(v_[k][i] / bc2) + config_.eps;
      p.value[i] -= config_.lr * (m_[k][i] / bc1) / denom;
    }
  }
}

void Adam::save(std::ostream& out) const {
  write_u64(out, static_cast<std::uint64_t>(t_));
  write_u64(out, m_.size());
  for (std::size_t k = 0; k < m_.size(); ++k) {
    write_tensor(out, m_[k]);
    write_tensor(out, v_[k]);
  }
}

void Adam::load(std::istream& in) {
  t_ = static_cast<long>(read_u64(in));
  if (read_u64(in) != m_.size()) fail(ErrorKind::kIo, "checkpoint: Adam state size mismatch");
  for (std::size_t k = 0; k < m_.size(); ++k) {
    read_tensor(in, m_[k], "adam m");
    read_tensor(in, v_[k], "adam v");
  }
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::kIo, "checkpoint: unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  if (n > (1u << 26)) fail(ErrorKind::kIo, "checkpoint: implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) fail(ErrorKind::kIo, "checkpoint: truncated string");
  return s;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_u64(out, t.size());
  for (double v : t.data()) write_f64(out, v);
}

void read_tensor(std::istream& in, Tensor& t, const std::string& what) {
  const std::uint64_t n = read_u64(in);
  if (n != t.size()) {
    fail(ErrorKind::kIo, "checkpoint: " + what + " holds " + std::to_string(n) + " values, expected " +
                             std::to_string(t.size()));
  }
  for (double& v : t.data()) v = read_f64(in);
}

}  // namespace hdas
