#include "hdas/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hdas/error.hpp"

namespace hdas {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  fail(ErrorKind::kShape, std::string(op) + ": " + detail);
}

void require_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Output positions o with o * stride + off inside [0, in_size).
void tap_range(int off, int stride, int in_size, int out_size, int& lo, int& hi) {
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  const int t = in_size - 1 - off;
  hi = t < 0 ? 0 : std::min(out_size, t / stride + 1);
  if (hi < lo) hi = lo;
}

struct ConvGeom {
  int n, cin, h, w, cout, k, oh, ow, stride, dil, groups, cin_g, cout_g, pad_t, pad_l;
};

void conv_forward(const ConvGeom& g, const double* x, const double* wt, double* out) {
  const int in_plane = g.h * g.w;
  const int out_plane = g.oh * g.ow;
  const bool pointwise = g.k == 1 && g.stride == 1 && g.pad_t == 0 && g.pad_l == 0;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.cout; ++co) {
      const int grp = co / g.cout_g;
      double* op = out + (static_cast<std::size_t>(n) * g.cout + co) * out_plane;
      for (int cig = 0; cig < g.cin_g; ++cig) {
        const int ci = grp * g.cin_g + cig;
        const double* xp = x + (static_cast<std::size_t>(n) * g.cin + ci) * in_plane;
        const double* wp = wt + (static_cast<std::size_t>(co) * g.cin_g + cig) * g.k * g.k;
        if (pointwise) {
          const double wv = wp[0];
          for (int i = 0; i < out_plane; ++i) op[i] += wv * xp[i];
          continue;
        }
        for (int kh = 0; kh < g.k; ++kh) {
          const int offh = kh * g.dil - g.pad_t;
          int oh_lo, oh_hi;
          tap_range(offh, g.stride, g.h, g.oh, oh_lo, oh_hi);
          for (int kw = 0; kw < g.k; ++kw) {
            const int offw = kw * g.dil - g.pad_l;
            int ow_lo, ow_hi;
            tap_range(offw, g.stride, g.w, g.ow, ow_lo, ow_hi);
            const double wv = wp[kh * g.k + kw];
            for (int oy = oh_lo; oy < oh_hi; ++oy) {
              const double* xr = xp + (oy * g.stride + offh) * g.w + offw;
              double* orow = op + oy * g.ow;
              if (g.stride == 1) {
                for (int ox = ow_lo; ox < ow_hi; ++ox) orow[ox] += wv * xr[ox];
              } else {
                for (int ox = ow_lo; ox < ow_hi; ++ox) orow[ox] += wv * xr[ox * g.stride];
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeom& g, const double* x, const double* wt, const double* gout,
                   double* gx, double* gw) {
  const int in_plane = g.h * g.w;
  const int out_plane = g.oh * g.ow;
  const bool pointwise = g.k == 1 && g.stride == 1 && g.pad_t == 0 && g.pad_l == 0;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.cout; ++co) {
      const int grp = co / g.cout_g;
      const double* gp = gout + (static_cast<std::size_t>(n) * g.cout + co) * out_plane;
      for (int cig = 0; cig < g.cin_g; ++cig) {
        const int ci = grp * g.cin_g + cig;
        const std::size_t xoff = (static_cast<std::size_t>(n) * g.cin + ci) * in_plane;
        const double* xp = x + xoff;
        double* gxp = gx ? gx + xoff : nullptr;
        const std::size_t woff = (static_cast<std::size_t>(co) * g.cin_g + cig) * g.k * g.k;
        const double* wp = wt + woff;
        double* gwp = gw ? gw + woff : nullptr;
        if (pointwise) {
          const double wv = wp[0];
          if (gxp) {
            for (int i = 0; i < out_plane; ++i) gxp[i] += wv * gp[i];
          }
          if (gwp) {
            double acc = 0.0;
#pragma omp simd reduction(+ : acc)
            for (int i = 0; i < out_plane; ++i) acc += gp[i] * xp[i];
            gwp[0] += acc;
          }
          continue;
        }
        for (int kh = 0; kh < g.k; ++kh) {
          const int offh = kh * g.dil - g.pad_t;
          int oh_lo, oh_hi;
          tap_range(offh, g.stride, g.h, g.oh, oh_lo, oh_hi);
          for (int kw = 0; kw < g.k; ++kw) {
            const int offw = kw * g.dil - g.pad_l;
            int ow_lo, ow_hi;
            tap_range(offw, g.stride, g.w, g.ow, ow_lo, ow_hi);
            const double wv = wp[kh * g.k + kw];
            double acc = 0.0;
            for (int oy = oh_lo; oy < oh_hi; ++oy) {
              const std::size_t xr = static_cast<std::size_t>(oy * g.stride + offh) * g.w + offw;
              const double* grow = gp + oy * g.ow;
              const double* xrow = xp + xr;
              if (g.stride == 1) {
                if (gwp) {
#pragma omp simd reduction(+ : acc)
                  for (int ox = ow_lo; ox < ow_hi; ++ox) acc += grow[ox] * xrow[ox];
                }
                if (gxp) {
                  double* gxrow = gxp + xr;
                  for (int ox = ow_lo; ox < ow_hi; ++ox) gxrow[ox] += wv * grow[ox];
                }
              } else {
                for (int ox = ow_lo; ox < ow_hi; ++ox) {
                  const std::size_t xi = static_cast<std::size_t>(ox) * g.stride;
                  acc += grow[ox] * xrow[xi];
                  if (gxp) gxp[xr + xi] += wv * grow[ox];
                }
              }
            }
            if (gwp) gwp[kh * g.k + kw] += acc;
          }
        }
      }
    }
  }
}

// Elementwise binary op with closed-form partials.
template <typename F, typename Da, typename Db>
Var binary(const char* name, Var a, Var b, F f, Da da, Db db) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same(name, av, bv);
  Tensor out = Tensor::uninitialized(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  return a.graph().record(
      name, {a.id(), b.id()}, std::move(out), [da, db](Graph& g, const Graph::Node& self) {
        const Tensor& x = g.node(self.inputs[0]).value;
        const Tensor& y = g.node(self.inputs[1]).value;
        if (Tensor* gx = g.grad_buffer(self.inputs[0])) {
          for (std::size_t i = 0; i < x.size(); ++i) (*gx)[i] += self.grad[i] * da(x[i], y[i]);
        }
        if (Tensor* gy = g.grad_buffer(self.inputs[1])) {
          for (std::size_t i = 0; i < y.size(); ++i) (*gy)[i] += self.grad[i] * db(x[i], y[i]);
        }
      });
}

}  // namespace

const Tensor& Var::value() const { return graph_->node(id_).value; }

const Tensor& Var::grad() const { return graph_->node(id_).grad; }

Var Graph::constant(Tensor t) {
  Node n;
  n.op = "constant";
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::variable(Tensor t) {
  Node n;
  n.op = "variable";
  n.value = std::move(t);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::parameter(Parameter& p) {
  Node n;
  n.op = "parameter";
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::record(const char* op, std::vector<int> inputs, Tensor value, BackwardFn fn) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (int id : inputs) {
    if (nodes_[static_cast<std::size_t>(id)].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Tensor* Graph::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return &n.grad;
}

void Graph::backward(Var loss) {
  Node& root = nodes_[static_cast<std::size_t>(loss.id())];
  if (root.value.size() != 1) {
    fail(ErrorKind::kShape, "backward: loss must be scalar, got " + shape_str(root.value.shape()));
  }
  if (!root.requires_grad) return;
  grad_buffer(loss.id())->fill(1.0);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n);
    if (n.param != nullptr) n.param->grad.add_(n.grad);
  }
}

SamePad same_padding(int in, int kernel, int stride, int dilation) {
  const int out = (in + stride - 1) / stride;
  const int span = (kernel - 1) * dilation + 1;
  const int total = std::max((out - 1) * stride + span - in, 0);
  return {out, total / 2};
}

Var conv2d(Var x, Var w, const Conv2dAttrs& attrs) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("conv2d", xv, 4);
  require_rank("conv2d", wv, 4);
  if (attrs.stride != 1 && attrs.stride != 2) shape_error("conv2d", "stride must be 1 or 2");
  if (attrs.dilation != 1 && attrs.dilation != 2) shape_error("conv2d", "dilation must be 1 or 2");
  ConvGeom g{};
  g.n = xv.dim(0);
  g.cin = xv.dim(1);
  g.h = xv.dim(2);
  g.w = xv.dim(3);
  g.cout = wv.dim(0);
  g.k = wv.dim(2);
  g.groups = attrs.groups;
  g.stride = attrs.stride;
  g.dil = attrs.dilation;
  if (wv.dim(3) != g.k) shape_error("conv2d", "non-square kernel " + shape_str(wv.shape()));
  if (g.groups < 1 || g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    shape_error("conv2d", "groups " + std::to_string(g.groups) + " incompatible with Cin=" +
                              std::to_string(g.cin) + " Cout=" + std::to_string(g.cout));
  }
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  if (wv.dim(1) != g.cin_g) {
    shape_error("conv2d", "weight " + shape_str(wv.shape()) + " expects " +
                              std::to_string(wv.dim(1) * g.groups) + " input channels, input is " +
                              shape_str(xv.shape()));
  }
  const SamePad ph = same_padding(g.h, g.k, g.stride, g.dil);
  const SamePad pw = same_padding(g.w, g.k, g.stride, g.dil);
  g.oh = ph.out;
  g.ow = pw.out;
  g.pad_t = ph.lo;
  g.pad_l = pw.lo;
  Tensor out({g.n, g.cout, g.oh, g.ow}, 0.0);
  conv_forward(g, xv.ptr(), wv.ptr(), out.ptr());
  return x.graph().record("conv2d", {x.id(), w.id()}, std::move(out),
                          [g](Graph& gr, const Graph::Node& self) {
                            Tensor* gx = gr.grad_buffer(self.inputs[0]);
                            Tensor* gw = gr.grad_buffer(self.inputs[1]);
                            conv_backward(g, gr.node(self.inputs[0]).value.ptr(),
                                          gr.node(self.inputs[1]).value.ptr(), self.grad.ptr(),
                                          gx ? gx->ptr() : nullptr, gw ? gw->ptr() : nullptr);
                          });
}

Var relu(Var x) {
  const Tensor& xv = x.value();
  Tensor out = Tensor::uninitialized(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return x.graph().record("relu", {x.id()}, std::move(out), [](Graph& g, const Graph::Node& self) {
    Tensor* gx = g.grad_buffer(self.inputs[0]);
    const Tensor& y = self.value;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] > 0.0) (*gx)[i] += self.grad[i];
    }
  });
}

Var batch_norm(Var x, std::optional<Var> gamma, std::optional<Var> beta, RunningStats& stats,
               bool training, double momentum, double eps) {
  const Tensor& xv = x.value();
  require_rank("batch_norm", xv, 4);
  const int n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  if (stats.mean.size() != static_cast<std::size_t>(c)) {
    shape_error("batch_norm", "running stats have " + std::to_string(stats.mean.size()) +
                                  " channels, input " + shape_str(xv.shape()));
  }
  for (const auto& p : {gamma, beta}) {
    if (p && p->value().shape() != Shape{c}) {
      shape_error("batch_norm", "affine parameter " + shape_str(p->value().shape()) +
                                    " for input " + shape_str(xv.shape()));
    }
  }
  const double m = static_cast<double>(n) * plane;
  std::vector<double> mean(c), inv_std(c);
  if (training) {
    if (n * plane < 2) shape_error("batch_norm", "training mode needs >1 value per channel");
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = xv.ptr() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (int i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / m;
      double v = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = xv.ptr() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (int i = 0; i < plane; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      const double var = v / m;
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + eps);
      stats.mean[ch] = (1.0 - momentum) * stats.mean[ch] + momentum * mu;
      stats.var[ch] = (1.0 - momentum) * stats.var[ch] + momentum * v / (m - 1.0);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = stats.mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(stats.var[ch] + eps);
    }
  }
  Tensor xhat = Tensor::uninitialized(xv.shape());
  Tensor out = Tensor::uninitialized(xv.shape());
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      const double gm = gamma ? gamma->value()[ch] : 1.0;
      const double bt = beta ? beta->value()[ch] : 0.0;
      for (int i = 0; i < plane; ++i) {
        const double h = (xv[off + i] - mean[ch]) * inv_std[ch];
        xhat[off + i] = h;
        out[off + i] = gm * h + bt;
      }
    }
  }
  std::vector<int> inputs{x.id()};
  const int gamma_slot = gamma ? static_cast<int>(inputs.size()) : -1;
  if (gamma) inputs.push_back(gamma->id());
  const int beta_slot = beta ? static_cast<int>(inputs.size()) : -1;
  if (beta) inputs.push_back(beta->id());
  return x.graph().record(
      "batch_norm", std::move(inputs), std::move(out),
      [n, c, plane, m, training, inv_std = std::move(inv_std), xhat = std::move(xhat), gamma_slot,
       beta_slot](Graph& g, const Graph::Node& self) {
        const Tensor& gy = self.grad;
        const Tensor* gm = gamma_slot >= 0 ? &g.node(self.inputs[gamma_slot]).value : nullptr;
        Tensor* gx = g.grad_buffer(self.inputs[0]);
        Tensor* ggamma = gamma_slot >= 0 ? g.grad_buffer(self.inputs[gamma_slot]) : nullptr;
        Tensor* gbeta = beta_slot >= 0 ? g.grad_buffer(self.inputs[beta_slot]) : nullptr;
        for (int ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gh = 0.0;
          for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
            for (int i = 0; i < plane; ++i) {
              sum_g += gy[off + i];
              sum_gh += gy[off + i] * xhat[off + i];
            }
          }
          if (ggamma) (*ggamma)[ch] += sum_gh;
          if (gbeta) (*gbeta)[ch] += sum_g;
          if (!gx) continue;
          const double scale_c = (gm ? (*gm)[ch] : 1.0) * inv_std[ch];
          for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
            for (int i = 0; i < plane; ++i) {
              if (training) {
                (*gx)[off + i] +=
                    scale_c * (gy[off + i] - sum_g / m - xhat[off + i] * sum_gh / m);
              } else {
                (*gx)[off + i] += scale_c * gy[off + i];
              }
            }
          }
        }
      });
}

Var avg_pool3x3(Var x, int stride) {
  const Tensor& xv = x.value();
  require_rank("avg_pool3x3", xv, 4);
  if (stride != 1 && stride != 2) shape_error("avg_pool3x3", "stride must be 1 or 2");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const SamePad ph = same_padding(h, 3, stride, 1), pw = same_padding(w, 3, stride, 1);
  const int oh = ph.out, ow = pw.out;
  // Padding is excluded from the divisor.
  std::vector<double> inv_count(static_cast<std::size_t>(oh) * ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      int cnt = 0;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = oy * stride - ph.lo + ky, ix = ox * stride - pw.lo + kx;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) ++cnt;
        }
      }
      inv_count[static_cast<std::size_t>(oy) * ow + ox] = 1.0 / cnt;
    }
  }
  Tensor out = Tensor::uninitialized({n, c, oh, ow});
  for (int p = 0; p < n * c; ++p) {
    const double* xp = xv.ptr() + static_cast<std::size_t>(p) * h * w;
    double* op = out.ptr() + static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride - ph.lo + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride - pw.lo + kx;
            if (ix >= 0 && ix < w) s += xp[iy * w + ix];
          }
        }
        op[oy * ow + ox] = s * inv_count[static_cast<std::size_t>(oy) * ow + ox];
      }
    }
  }
  return x.graph().record(
      "avg_pool3x3", {x.id()}, std::move(out),
      [n, c, h, w, oh, ow, stride, pt = ph.lo, pl = pw.lo, inv_count = std::move(inv_count)](
          Graph& g, const Graph::Node& self) {
        Tensor* gx = g.grad_buffer(self.inputs[0]);
        for (int p = 0; p < n * c; ++p) {
          double* gp = gx->ptr() + static_cast<std::size_t>(p) * h * w;
          const double* go = self.grad.ptr() + static_cast<std::size_t>(p) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              const double v = go[oy * ow + ox] * inv_count[static_cast<std::size_t>(oy) * ow + ox];
              for (int ky = 0; ky < 3; ++ky) {
                const int iy = oy * stride - pt + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  const int ix = ox * stride - pl + kx;
                  if (ix >= 0 && ix < w) gp[iy * w + ix] += v;
                }
              }
            }
          }
        }
      });
}

Var max_pool3x3(Var x, int stride) {
  const Tensor& xv = x.value();
  require_rank("max_pool3x3", xv, 4);
  if (stride != 1 && stride != 2) shape_error("max_pool3x3", "stride must be 1 or 2");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const SamePad ph = same_padding(h, 3, stride, 1), pw = same_padding(w, 3, stride, 1);
  const int oh = ph.out, ow = pw.out;
  Tensor out = Tensor::uninitialized({n, c, oh, ow});
  std::vector<int> arg(out.size());
  for (int p = 0; p < n * c; ++p) {
    const double* xp = xv.ptr() + static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int best_i = -1;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride - ph.lo + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride - pw.lo + kx;
            if (ix < 0 || ix >= w) continue;
            if (best_i < 0 || xp[iy * w + ix] > best) {
              best = xp[iy * w + ix];
              best_i = iy * w + ix;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(p) * oh + oy) * ow + ox;
        out[o] = best;
        arg[o] = best_i;
      }
    }
  }
  return x.graph().record("max_pool3x3", {x.id()}, std::move(out),
                          [h, w, oh, ow, arg = std::move(arg)](Graph& g, const Graph::Node& self) {
                            Tensor* gx = g.grad_buffer(self.inputs[0]);
                            const std::size_t planes = arg.size() / (static_cast<std::size_t>(oh) * ow);
                            for (std::size_t p = 0; p < planes; ++p) {
                              for (int i = 0; i < oh * ow; ++i) {
                                const std::size_t o = p * oh * ow + i;
                                (*gx)[p * h * w + arg[o]] += self.grad[o];
                              }
                            }
                          });
}

Var identity(Var x) { return x; }

Var zero_op(Var x, int stride) {
  const Tensor& xv = x.value();
  require_rank("zero", xv, 4);
  if (stride != 1 && stride != 2) shape_error("zero", "stride must be 1 or 2");
  const int oh = (xv.dim(2) + stride - 1) / stride, ow = (xv.dim(3) + stride - 1) / stride;
  return x.graph().constant(Tensor({xv.dim(0), xv.dim(1), oh, ow}, 0.0));
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) shape_error("concat_channels", "no inputs");
  const Tensor& first = xs[0].value();
  require_rank("concat_channels", first, 4);
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int c_total = 0;
  std::vector<int> ids, chans;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    require_rank("concat_channels", t, 4);
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      shape_error("concat_channels",
                  "incompatible " + shape_str(first.shape()) + " and " + shape_str(t.shape()));
    }
    c_total += t.dim(1);
    ids.push_back(v.id());
    chans.push_back(t.dim(1));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out = Tensor::uninitialized({n, c_total, h, w});
  for (int b = 0; b < n; ++b) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const Tensor& t = xs[k].value();
      const std::size_t len = static_cast<std::size_t>(chans[k]) * plane;
      std::copy_n(t.ptr() + b * len, len, out.ptr() + (b * c_total + c0) * plane);
      c0 += static_cast<std::size_t>(chans[k]);
    }
  }
  return xs[0].graph().record(
      "concat_channels", ids, std::move(out),
      [n, c_total, plane, chans](Graph& g, const Graph::Node& self) {
        std::size_t c0 = 0;
        for (std::size_t k = 0; k < chans.size(); ++k) {
          const std::size_t len = static_cast<std::size_t>(chans[k]) * plane;
          if (Tensor* gx = g.grad_buffer(self.inputs[k])) {
            for (int b = 0; b < n; ++b) {
              const double* src = self.grad.ptr() + (b * c_total + c0) * plane;
              double* dst = gx->ptr() + b * len;
              for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
            }
          }
          c0 += static_cast<std::size_t>(chans[k]);
        }
      });
}

Var crop(Var x, int top, int left) {
  const Tensor& xv = x.value();
  require_rank("crop", xv, 4);
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (top < 0 || left < 0 || top >= h || left >= w) {
    shape_error("crop", "offsets (" + std::to_string(top) + "," + std::to_string(left) +
                            ") out of range for " + shape_str(xv.shape()));
  }
  const int oh = h - top, ow = w - left;
  Tensor out = Tensor::uninitialized({n, c, oh, ow});
  for (int p = 0; p < n * c; ++p) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        out[(static_cast<std::size_t>(p) * oh + y) * ow + xx] =
            xv[(static_cast<std::size_t>(p) * h + y + top) * w + xx + left];
      }
    }
  }
  return x.graph().record("crop", {x.id()}, std::move(out),
                          [n, c, h, w, oh, ow, top, left](Graph& g, const Graph::Node& self) {
                            Tensor* gx = g.grad_buffer(self.inputs[0]);
                            for (int p = 0; p < n * c; ++p) {
                              for (int y = 0; y < oh; ++y) {
                                for (int xx = 0; xx < ow; ++xx) {
                                  (*gx)[(static_cast<std::size_t>(p) * h + y + top) * w + xx + left] +=
                                      self.grad[(static_cast<std::size_t>(p) * oh + y) * ow + xx];
                                }
                              }
                            }
                          });
}

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) shape_error("add_n", "no inputs");
  if (xs.size() == 1) return xs[0];
  const Tensor& first = xs[0].value();
  Tensor out = first;
  std::vector<int> ids{xs[0].id()};
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same("add_n", first, xs[k].value());
    out.add_(xs[k].value());
    ids.push_back(xs[k].id());
  }
  return xs[0].graph().record("add_n", std::move(ids), std::move(out),
                              [](Graph& g, const Graph::Node& self) {
                                for (int id : self.inputs) {
                                  if (Tensor* gx = g.grad_buffer(id)) gx->add_(self.grad);
                                }
                              });
}

Var scale(Var x, double k) {
  const Tensor& xv = x.value();
  Tensor out = Tensor::uninitialized(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * xv[i];
  return x.graph().record("scale", {x.id()}, std::move(out), [k](Graph& g, const Graph::Node& self) {
    Tensor* gx = g.grad_buffer(self.inputs[0]);
    for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += k * self.grad[i];
  });
}

Var add_scalar(Var x, double c) {
  const Tensor& xv = x.value();
  Tensor out = Tensor::uninitialized(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c;
  return x.graph().record("add_scalar", {x.id()}, std::move(out),
                          [](Graph& g, const Graph::Node& self) {
                            g.grad_buffer(self.inputs[0])->add_(self.grad);
                          });
}

Var weighted_sum(const std::vector<Var>& xs, Var w, const std::vector<int>& index) {
  if (xs.empty() || xs.size() != index.size()) {
    shape_error("weighted_sum", "need one weight index per input");
  }
  const Tensor& wv = w.value();
  require_rank("weighted_sum", wv, 1);
  const Tensor& first = xs[0].value();
  Tensor out(first.shape(), 0.0);
  std::vector<int> ids;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& t = xs[k].value();
    require_same("weighted_sum", first, t);
    if (index[k] < 0 || index[k] >= wv.dim(0)) shape_error("weighted_sum", "weight index out of range");
    const double c = wv[static_cast<std::size_t>(index[k])];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * t[i];
    ids.push_back(xs[k].id());
  }
  ids.push_back(w.id());
  return w.graph().record("weighted_sum", std::move(ids), std::move(out),
                          [index](Graph& g, const Graph::Node& self) {
                            const int wid = self.inputs.back();
                            const Tensor& wv = g.node(wid).value;
                            Tensor* gw = g.grad_buffer(wid);
                            for (std::size_t k = 0; k < index.size(); ++k) {
                              const int xid = self.inputs[k];
                              const double c = wv[static_cast<std::size_t>(index[k])];
                              if (Tensor* gx = g.grad_buffer(xid)) {
                                for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += c * self.grad[i];
                              }
                              if (gw) {
                                const Tensor& xv = g.node(xid).value;
                                double dot = 0.0;
                                for (std::size_t i = 0; i < xv.size(); ++i) dot += self.grad[i] * xv[i];
                                (*gw)[static_cast<std::size_t>(index[k])] += dot;
                              }
                            }
                          });
}

Var global_avg_pool(Var x) {
  const Tensor& xv = x.value();
  require_rank("global_avg_pool", xv, 4);
  const int n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  Tensor out({n, c});
  for (int p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (int i = 0; i < plane; ++i) s += xv[static_cast<std::size_t>(p) * plane + i];
    out[static_cast<std::size_t>(p)] = s / plane;
  }
  return x.graph().record("global_avg_pool", {x.id()}, std::move(out),
                          [n, c, plane](Graph& g, const Graph::Node& self) {
                            Tensor* gx = g.grad_buffer(self.inputs[0]);
                            for (int p = 0; p < n * c; ++p) {
                              const double v = self.grad[static_cast<std::size_t>(p)] / plane;
                              for (int i = 0; i < plane; ++i) (*gx)[static_cast<std::size_t>(p) * plane + i] += v;
                            }
                          });
}

Var linear(Var x, Var w, std::optional<Var> b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("linear", xv, 2);
  require_rank("linear", wv, 2);
  const int n = xv.dim(0), f = xv.dim(1), o = wv.dim(0);
  if (wv.dim(1) != f) {
    shape_error("linear", "input " + shape_str(xv.shape()) + " vs weight " + shape_str(wv.shape()));
  }
  if (b && b->value().shape() != Shape{o}) {
    shape_error("linear", "bias " + shape_str(b->value().shape()) + " for weight " + shape_str(wv.shape()));
  }
  Tensor out({n, o});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < o; ++j) {
      double s = b ? b->value()[static_cast<std::size_t>(j)] : 0.0;
      for (int k = 0; k < f; ++k) s += xv[static_cast<std::size_t>(i) * f + k] * wv[static_cast<std::size_t>(j) * f + k];
      out[static_cast<std::size_t>(i) * o + j] = s;
    }
  }
  std::vector<int> ids{x.id(), w.id()};
  if (b) ids.push_back(b->id());
  return x.graph().record("linear", std::move(ids), std::move(out),
                          [n, f, o](Graph& g, const Graph::Node& self) {
                            const Tensor& xv = g.node(self.inputs[0]).value;
                            const Tensor& wv = g.node(self.inputs[1]).value;
                            Tensor* gx = g.grad_buffer(self.inputs[0]);
                            Tensor* gw = g.grad_buffer(self.inputs[1]);
                            Tensor* gb = self.inputs.size() > 2 ? g.grad_buffer(self.inputs[2]) : nullptr;
                            for (int i = 0; i < n; ++i) {
                              for (int j = 0; j < o; ++j) {
                                const double gy = self.grad[static_cast<std::size_t>(i) * o + j];
                                if (gb) (*gb)[static_cast<std::size_t>(j)] += gy;
                                for (int k = 0; k < f; ++k) {
                                  if (gx) (*gx)[static_cast<std::size_t>(i) * f + k] += gy * wv[static_cast<std::size_t>(j) * f + k];
                                  if (gw) (*gw)[static_cast<std::size_t>(j) * f + k] += gy * xv[static_cast<std::size_t>(i) * f + k];
                                }
                              }
                            }
                          });
}

Var softmax(Var x, int axis) {
  const Tensor& xv = x.value();
  if (axis < 0) axis += xv.rank();
  if (axis < 0 || axis >= xv.rank()) shape_error("softmax", "axis out of range for " + shape_str(xv.shape()));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(xv.dim(i));
  for (int i = axis + 1; i < xv.rank(); ++i) inner *= static_cast<std::size_t>(xv.dim(i));
  const std::size_t len = static_cast<std::size_t>(xv.dim(axis));
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        s += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= s;
    }
  }
  return x.graph().record("softmax", {x.id()}, std::move(out),
                          [outer, inner, len](Graph& g, const Graph::Node& self) {
                            Tensor* gx = g.grad_buffer(self.inputs[0]);
                            const Tensor& y = self.value;
                            for (std::size_t o = 0; o < outer; ++o) {
                              for (std::size_t in = 0; in < inner; ++in) {
                                const std::size_t base = o * len * inner + in;
                                double dot = 0.0;
                                for (std::size_t k = 0; k < len; ++k) dot += self.grad[base + k * inner] * y[base + k * inner];
                                for (std::size_t k = 0; k < len; ++k) {
                                  const std::size_t i = base + k * inner;
                                  (*gx)[i] += y[i] * (self.grad[i] - dot);
                                }
                              }
                            }
                          });
}

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  const Tensor& zv = logits.value();
  require_rank("cross_entropy", zv, 2);
  const int n = zv.dim(0), k = zv.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    shape_error("cross_entropy", std::to_string(labels.size()) + " labels for logits " + shape_str(zv.shape()));
  }
  Tensor probs({n, k});
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) shape_error("cross_entropy", "label " + std::to_string(y) + " out of range");
    const double* z = zv.ptr() + static_cast<std::size_t>(i) * k;
    double mx = z[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, z[j]);
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(z[j] - mx);
    const double lse = mx + std::log(s);
    for (int j = 0; j < k; ++j) probs[static_cast<std::size_t>(i) * k + j] = std::exp(z[j] - lse);
    loss += lse - z[y];
  }
  return logits.graph().record(
      "cross_entropy", {logits.id()}, Tensor::scalar(loss / n),
      [n, k, labels, probs = std::move(probs)](Graph& g, const Graph::Node& self) {
        Tensor* gz = g.grad_buffer(self.inputs[0]);
        const double s = self.grad[0] / n;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < k; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * k + j;
            (*gz)[idx] += s * (probs[idx] - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
          }
        }
      });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return x.graph().record("sum", {x.id()}, Tensor::scalar(s), [](Graph& g, const Graph::Node& self) {
    Tensor* gx = g.grad_buffer(self.inputs[0]);
    for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += self.grad[0];
  });
}

Var select(Var x, int index) {
  const Tensor& xv = x.value();
  if (index < 0 || static_cast<std::size_t>(index) >= xv.size()) {
    shape_error("select", "index " + std::to_string(index) + " out of range for " + shape_str(xv.shape()));
  }
  return x.graph().record("select", {x.id()}, Tensor::scalar(xv[static_cast<std::size_t>(index)]),
                          [index](Graph& g, const Graph::Node& self) {
                            (*g.grad_buffer(self.inputs[0]))[static_cast<std::size_t>(index)] += self.grad[0];
                          });
}

Var row(Var x, int r) {
  const Tensor& xv = x.value();
  require_rank("row", xv, 2);
  if (r < 0 || r >= xv.dim(0)) shape_error("row", "row " + std::to_string(r) + " out of range for " + shape_str(xv.shape()));
  const int cols = xv.dim(1);
  std::vector<double> vals(xv.ptr() + static_cast<std::size_t>(r) * cols,
                           xv.ptr() + static_cast<std::size_t>(r + 1) * cols);
  return x.graph().record("row", {x.id()}, Tensor({cols}, std::move(vals)),
                          [r, cols](Graph& g, const Graph::Node& self) {
                            Tensor* gx = g.grad_buffer(self.inputs[0]);
                            for (int j = 0; j < cols; ++j) (*gx)[static_cast<std::size_t>(r) * cols + j] += self.grad[static_cast<std::size_t>(j)];
                          });
}

GradCheckReport grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double eps,
                           double tol) {
  Tensor analytic;
  {
    Graph g;
    Var xv = g.variable(x);
    Var loss = f(g, xv);
    g.backward(loss);
    analytic = xv.grad().empty() ? Tensor(x.shape(), 0.0) : xv.grad();
  }
  auto eval = [&](const Tensor& at) {
    Graph g;
    return f(g, g.variable(at)).value().item();
  };
  GradCheckReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = eval(probe);
    probe[i] = x[i] - eps;
    const double down = eval(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_err || !std::isfinite(rel)) {
      report.max_rel_err = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace hdas
