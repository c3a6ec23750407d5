#include "hdas/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <optional>

#include "hdas/nn.hpp"
#include "hdas/stage.hpp"

namespace hdas {

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

/// Contracts an op output with a fixed random tensor so every output element
/// contributes a distinct weight to the scalar. Weights stay away from zero so
/// that linear ops never have gradients below finite-difference resolution.
Var project(Graph& g, Var out, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "gradcheck.projection"));
  Tensor w(out.shape());
  for (double& v : w.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform());
  return sum(mul(out, g.constant(std::move(w))));
}

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct OpCase {
  std::string name;
  std::vector<Shape> shapes;
  Builder build;
  // Piecewise-linear ops use a finer step so that no probe crosses a kink.
  double eps = 1e-4;
};

/// Two shape variants per op: even and odd spatial sizes, different batch
/// and channel counts.
std::vector<OpCase> op_cases(int variant) {
  const int n = variant == 0 ? 2 : 3;
  const int ch = variant == 0 ? 4 : 3;
  const int h = variant == 0 ? 5 : 6;
  const int w = variant == 0 ? 5 : 7;
  const Shape img{n, ch, h, w};
  std::vector<OpCase> cases;
  auto conv = [](Conv2dAttrs a) {
    return [a](Graph&, const std::vector<Var>& v) { return conv2d(v[0], v[1], a); };
  };
  cases.push_back({"conv2d", {img, {3, ch, 3, 3}}, conv({1, 1, 1})});
  cases.push_back({"conv2d.stride2", {img, {3, ch, 3, 3}}, conv({2, 1, 1})});
  cases.push_back({"conv2d.dilated", {img, {3, ch, 3, 3}}, conv({1, 2, 1})});
  cases.push_back({"conv2d.depthwise", {img, {ch, 1, 5, 5}}, conv({1, 1, ch})});
  cases.push_back({"conv2d.pointwise.stride2", {{n, ch, h + 1, w + 1}, {2, ch, 1, 1}}, conv({2, 1, 1})});
  cases.push_back({"relu", {img}, [](Graph&, const std::vector<Var>& v) { return relu(v[0]); }, 1e-6});
  cases.push_back({"batch_norm.train", {img, {ch}, {ch}}, [ch](Graph&, const std::vector<Var>& v) {
                     RunningStats stats(ch);
                     return batch_norm(v[0], v[1], v[2], stats, true);
                   }});
  cases.push_back({"batch_norm.train.affine_free", {img}, [ch](Graph&, const std::vector<Var>& v) {
                     RunningStats stats(ch);
                     return batch_norm(v[0], std::nullopt, std::nullopt, stats, true);
                   }});
  cases.push_back({"batch_norm.eval", {img, {ch}, {ch}}, [ch](Graph&, const std::vector<Var>& v) {
                     RunningStats stats(ch);
                     for (int c = 0; c < ch; ++c) {
                       stats.mean[static_cast<std::size_t>(c)] = 0.1 * c;
                       stats.var[static_cast<std::size_t>(c)] = 0.5 + 0.25 * c;
                     }
                     return batch_norm(v[0], v[1], v[2], stats, false);
                   }});
  cases.push_back({"avg_pool3x3", {img}, [](Graph&, const std::vector<Var>& v) { return avg_pool3x3(v[0], 1); }});
  cases.push_back(
      {"avg_pool3x3.stride2", {img}, [](Graph&, const std::vector<Var>& v) { return avg_pool3x3(v[0], 2); }});
  cases.push_back(
      {"max_pool3x3", {img}, [](Graph&, const std::vector<Var>& v) { return max_pool3x3(v[0], 1); }, 1e-6});
  cases.push_back({"max_pool3x3.stride2", {img},
                   [](Graph&, const std::vector<Var>& v) { return max_pool3x3(v[0], 2); }, 1e-6});
  cases.push_back({"identity", {img}, [](Graph&, const std::vector<Var>& v) { return identity(v[0]); }});
  cases.push_back({"zero", {img}, [](Graph&, const std::vector<Var>& v) { return add(zero_op(v[0], 1), v[0]); }});
  cases.push_back({"concat_channels", {img, {n, 2, h, w}},
                   [](Graph&, const std::vector<Var>& v) { return concat_channels({v[0], v[1]}); }});
  cases.push_back({"crop", {img}, [](Graph&, const std::vector<Var>& v) { return crop(v[0], 1, 1); }});
  cases.push_back({"add", {img, img}, [](Graph&, const std::vector<Var>& v) { return add(v[0], v[1]); }});
  cases.push_back({"sub", {img, img}, [](Graph&, const std::vector<Var>& v) { return sub(v[0], v[1]); }});
  cases.push_back({"mul", {img, img}, [](Graph&, const std::vector<Var>& v) { return mul(v[0], v[1]); }});
  cases.push_back({"div", {img, img}, [](Graph&, const std::vector<Var>& v) {
                     // Keep the denominator away from zero.
                     return div(v[0], add_scalar(v[1], 6.0));
                   }});
  cases.push_back(
      {"add_n", {img, img, img}, [](Graph&, const std::vector<Var>& v) { return add_n({v[0], v[1], v[2]}); }});
  cases.push_back({"scale", {img}, [](Graph&, const std::vector<Var>& v) { return scale(v[0], -1.7); }});
  cases.push_back({"add_scalar", {img}, [](Graph&, const std::vector<Var>& v) { return add_scalar(v[0], 0.3); }});
  cases.push_back({"weighted_sum", {img, img, img, {2}}, [](Graph&, const std::vector<Var>& v) {
                     return weighted_sum({v[0], v[1], v[2]}, v[3], {0, 1, 0});
                   }});
  cases.push_back({"global_avg_pool", {img}, [](Graph&, const std::vector<Var>& v) { return global_avg_pool(v[0]); }});
  cases.push_back({"linear", {{n, h}, {ch, h}, {ch}},
                   [](Graph&, const std::vector<Var>& v) { return linear(v[0], v[1], v[2]); }});
  cases.push_back({"linear.no_bias", {{n, h}, {ch, h}},
                   [](Graph&, const std::vector<Var>& v) { return linear(v[0], v[1], std::nullopt); }});
  cases.push_back({"softmax.axis0", {{ch, n}}, [](Graph&, const std::vector<Var>& v) { return softmax(v[0], 0); }});
  cases.push_back({"softmax.axis1", {{ch, n}}, [](Graph&, const std::vector<Var>& v) { return softmax(v[0], 1); }});
  cases.push_back({"cross_entropy", {{ch, h}}, [ch](Graph&, const std::vector<Var>& v) {
                     std::vector<int> labels;
                     for (int i = 0; i < ch; ++i) labels.push_back((3 * i + 1) % 5);
                     return cross_entropy(v[0], labels);
                   }});
  cases.push_back({"sum", {img}, [](Graph&, const std::vector<Var>& v) { return sum(v[0]); }});
  cases.push_back({"select", {{h + 1}}, [](Graph&, const std::vector<Var>& v) { return select(v[0], 4); }});
  cases.push_back({"row", {{n, ch}}, [](Graph&, const std::vector<Var>& v) { return row(v[0], 1); }});

  cases.push_back({"net.conv_relu_linear", {img, {5, ch, 3, 3}, {3, 5}, {3}},
                   [n, ch](Graph&, const std::vector<Var>& v) {
                     // Fan-in scaling keeps the softmax away from saturation.
                     Var hidden = relu(conv2d(v[0], scale(v[1], 1.0 / std::sqrt(9.0 * ch)), {1, 1, 1}));
                     std::vector<int> labels;
                     for (int i = 0; i < n; ++i) labels.push_back(i % 3);
                     return cross_entropy(linear(global_avg_pool(hidden), scale(v[2], 0.5), v[3]), labels);
                   }});

  const std::vector<StageSpec> specs = variant == 0 ? std::vector<StageSpec>{{5, 3, 3}, {4, 4, 2}, {6, 2, 4}}
                                                    : std::vector<StageSpec>{{6, 7, 2}, {3, 2, 2}, {8, 3, 4}};
  cases.push_back({"depth_loss.alpha", {{specs[0].n_edges(), 4}, {specs[1].n_edges(), 4}, {specs[2].n_edges(), 4}},
                   [specs](Graph&, const std::vector<Var>& v) {
                     return depth_loss({v[0], v[1], v[2]}, {std::nullopt, std::nullopt, std::nullopt}, specs);
                   }});
  cases.push_back({"depth_loss.alpha.unnormalized", {{specs[0].n_edges(), 4}},
                   [specs](Graph&, const std::vector<Var>& v) {
                     return depth_loss({v[0]}, {std::nullopt}, {specs[0]}, false);
                   }});
  cases.push_back({"depth_loss.beta",
                   {{specs[0].n_edges(), 4},
                    {specs[1].n_edges(), 4},
                    {specs[2].n_edges(), 4},
                    {specs[0].n_pairs()},
                    {specs[1].n_pairs()},
                    {specs[2].n_pairs()}},
                   [specs](Graph&, const std::vector<Var>& v) {
                     return depth_loss({v[0], v[1], v[2]}, {v[3], v[4], v[5]}, specs);
                   }});
  cases.push_back({"complexity_loss", {{h}, {h - 1}, {h + 2}}, [](Graph&, const std::vector<Var>& v) {
                     return complexity_loss({v[0], v[1], v[2]}, {1.0, 0.5, 2.0}, 4);
                   }});
  return cases;
}

}  // namespace

std::vector<GradCheckCase> run_gradient_suite(const std::vector<std::uint64_t>& seeds, double tol) {
  std::vector<GradCheckCase> out;
  for (std::uint64_t seed : seeds) {
    for (int variant = 0; variant < 2; ++variant) {
      for (const OpCase& c : op_cases(variant)) {
        const std::string tag = c.name + "#" + std::to_string(variant);
        Rng rng(mix_seed(seed, "gradcheck." + tag));
        std::vector<Tensor> inputs;
        for (const Shape& s : c.shapes) inputs.push_back(random_tensor(rng, s));
        const std::uint64_t proj_seed = mix_seed(seed, tag);
        for (std::size_t wrt = 0; wrt < inputs.size(); ++wrt) {
          auto f = [&](Graph& g, Var x) {
            std::vector<Var> vars;
            for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(i == wrt ? x : g.constant(inputs[i]));
            Var y = c.build(g, vars);
            return y.value().size() == 1 ? y : project(g, y, proj_seed);
          };
          GradCheckCase r;
          r.name = (c.shapes.size() == 1 ? c.name : c.name + "[" + std::to_string(wrt) + "]") + " " +
                   shape_str(inputs[wrt].shape());
          r.seed = seed;
          r.report = grad_check(f, inputs[wrt], c.eps, tol);
          out.push_back(r);
        }
      }
    }
  }
  return out;
}

std::string format_gradient_suite(const std::vector<GradCheckCase>& cases, double tol) {
  std::string out;
  int failed = 0;
  char buf[256];
  for (const auto& c : cases) {
    std::snprintf(buf, sizeof buf, "%-52s seed %-4llu max_rel_err %.3e %s\n", c.name.c_str(),
                  static_cast<unsigned long long>(c.seed), c.report.max_rel_err, c.report.pass ? "ok" : "FAIL");
    out += buf;
    failed += !c.report.pass;
  }
  std::snprintf(buf, sizeof buf, "%zu checks, %d failed (tol %.0e)\n", cases.size(), failed, tol);
  out += buf;
  return out;
}

}  // namespace hdas
