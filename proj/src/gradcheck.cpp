#include "svtas/gradcheck.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include "svtas/error.hpp"
#include "svtas/hbrt.hpp"
#include "svtas/model.hpp"
#include "svtas/ops.hpp"
#include "svtas/train.hpp"

namespace svtas {
namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return std::size_t(rng.uniform_int(std::int64_t(lo), std::int64_t(hi))); }

Tensor random_tensor(Shape shape, Rng& rng, bool grad = true, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Random linear functional of y so that no symmetry zeroes the gradient.
Tensor project(const Tensor& y, const Tensor& weights) { return ops::sum(ops::mul(y, weights)); }

struct Case {
  std::function<Tensor()> loss;
  std::vector<Tensor> leaves;
  std::size_t max_coords = std::numeric_limits<std::size_t>::max();
};

using CaseFactory = std::function<Case(Rng&, const GradCheckOptions&)>;

Case unary_case(Rng& rng, Tensor (*op)(const Tensor&)) {
  const Shape s{pick(rng, 1, 8), pick(rng, 1, 8)};
  Tensor x = random_tensor(s, rng), w = random_tensor(s, rng, false);
  return {[=] { return project(op(x), w); }, {x}};
}

Case binary_case(Rng& rng, Tensor (*op)(const Tensor&, const Tensor&)) {
  const Shape s{pick(rng, 1, 8), pick(rng, 1, 8), pick(rng, 1, 4)};
  Tensor a = random_tensor(s, rng), b = random_tensor(s, rng), w = random_tensor(s, rng, false);
  return {[=] { return project(op(a, b), w); }, {a, b}};
}

Case conv_case(Rng& rng, ops::Padding padding) {
  const std::size_t taps = padding == ops::Padding::same ? 2 * pick(rng, 0, 2) + 1 : pick(rng, 1, 3);
  const std::size_t dil = padding == ops::Padding::same ? pick(rng, 1, 3) : pick(rng, 1, 2);
  // valid: receptive field (taps - 1) * dil <= 4 keeps t within 8
  const std::size_t t = padding == ops::Padding::same ? pick(rng, 1, 8) : (taps - 1) * dil + pick(rng, 1, 4);
  const std::size_t cin = pick(rng, 1, 6), cout = pick(rng, 1, 6);
  Tensor x = random_tensor({t, cin}, rng), wt = random_tensor({cout, cin, taps}, rng), b = random_tensor({cout}, rng);
  const std::size_t t_out = padding == ops::Padding::same ? t : t - (taps - 1) * dil;
  Tensor w = random_tensor({t_out, cout}, rng, false);
  return {[=] { return project(ops::conv1d(x, wt, b, dil, padding), w); }, {x, wt, b}};
}

Case attention_case(Rng& rng) {
  const std::size_t n = pick(rng, 1, 8), m = pick(rng, 1, 8), d = pick(rng, 1, 8), e = pick(rng, 1, 8);
  Tensor q = random_tensor({n, d}, rng), k = random_tensor({m, d}, rng), v = random_tensor({m, e}, rng);
  std::vector<double> mask(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t keep = pick(rng, 0, m - 1);
    for (std::size_t j = 0; j < m; ++j) mask[i * m + j] = (j == keep || rng.uniform() < 0.5) ? 0.0 : -1e30;
  }
  Tensor mk = Tensor::from({n, m}, std::move(mask)), w = random_tensor({n, e}, rng, false);
  const double scale = rng.uniform(0.2, 1.0);
  return {[=] { return project(ops::attention(q, k, v, mk, scale), w); }, {q, k, v}};
}

// Fresh N(0, 0.3^2) values for every parameter, biases and norm gains
// included. The initialiser's zero biases and unit gains leave short layer
// norm rows with a small spread, where the third derivative is large enough
// that central differences at h = 1e-5 miss by more than 1e-6.
void redraw(const ParameterSet& params, Rng& rng) {
  for (const auto& [name, t] : params) {
    Tensor leaf = t;
    for (double& v : leaf.mutable_values()) v = 0.3 * rng.normal();
  }
}

std::vector<Tensor> param_leaves(const ParameterSet& params) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

HbrtConfig random_hbrt(Rng& rng, std::size_t layers) {
  HbrtConfig cfg;
  // Width >= 4: layer norm over two entries is a smoothed sign function
  // whose curvature swamps central differences near ties.
  cfg.heads = pick(rng, 1, 2);
  cfg.width = cfg.heads == 1 ? 2 * pick(rng, 2, 4) : 4 * pick(rng, 1, 2);
  cfg.layers = layers;
  cfg.memory = pick(rng, 1, 8);
  cfg.window = pick(rng, 1, 4);
  cfg.ffn_mult = pick(rng, 1, 2);
  return cfg;
}

ModelConfig random_model(Rng& rng) {
  ModelConfig cfg;
  cfg.clip = {pick(rng, 1, 4), pick(rng, 1, 3)};
  cfg.hbrt = random_hbrt(rng, pick(rng, 1, 2));
  cfg.hbrt.width = 8;
  cfg.encoder.hidden_width = pick(rng, 1, 6);
  cfg.encoder.groups = pick(rng, 1, 2);
  cfg.agent.refine_blocks = pick(rng, 0, 2);
  cfg.agent.refine_width = pick(rng, 1, 4);
  return cfg;
}

FeatureStream random_stream(Rng& rng, std::size_t frames, std::size_t width, std::size_t classes) {
  FeatureStream s;
  s.id = "gradcheck";
  s.frames = frames;
  s.width = width;
  s.classes = classes;
  for (std::size_t i = 0; i < frames * width; ++i) s.features.push_back(rng.normal());
  for (std::size_t i = 0; i < frames; ++i) s.labels.push_back(int(pick(rng, 0, classes - 1)));
  return s;
}

const std::vector<std::pair<std::string, CaseFactory>>& registry() {
  static const std::vector<std::pair<std::string, CaseFactory>> checks = {
      {"add", [](Rng& r, const GradCheckOptions&) { return binary_case(r, ops::add); }},
      {"sub", [](Rng& r, const GradCheckOptions&) { return binary_case(r, ops::sub); }},
      {"mul", [](Rng& r, const GradCheckOptions&) { return binary_case(r, ops::mul); }},
      {"add_row",
       [](Rng& r, const GradCheckOptions&) {
         const std::size_t n = pick(r, 1, 8), d = pick(r, 1, 8);
         Tensor x = random_tensor({n, d}, r), b = random_tensor({d}, r), w = random_tensor({n, d}, r, false);
         return Case{[=] { return project(ops::add_row(x, b), w); }, {x, b}};
       }},
      {"scale",
       [](Rng& r, const GradCheckOptions&) {
         const double s = r.normal();
         Tensor x = random_tensor({pick(r, 1, 8), pick(r, 1, 8)}, r), w = random_tensor(x.shape(), r, false);
         return Case{[=] { return project(ops::add_scalar(ops::scale(x, s), s), w); }, {x}};
       }},
      {"matmul",
       [](Rng& r, const GradCheckOptions&) {
         const std::size_t m = pick(r, 1, 8), k = pick(r, 1, 8), n = pick(r, 1, 8);
         Tensor a = random_tensor({m, k}, r), b = random_tensor({k, n}, r), w = random_tensor({m, n}, r, false);
         return Case{[=] { return project(ops::matmul(a, b), w); }, {a, b}};
       }},
      {"transpose_reshape",
       [](Rng& r, const GradCheckOptions&) {
         const std::size_t m = pick(r, 1, 8), n = pick(r, 1, 8);
         Tensor a = random_tensor({m, n}, r), w = random_tensor({n * m}, r, false);
         return Case{[=] { return project(ops::reshape(ops::transpose(a), {n * m}), w); }, {a}};
       }},
      {"conv1d_valid", [](Rng& r, const GradCheckOptions&) { return conv_case(r, ops::Padding::valid); }},
      {"conv1d_same", [](Rng& r, const GradCheckOptions&) { return conv_case(r, ops::Padding::same); }},
      {"sigmoid", [](Rng& r, const GradCheckOptions&) { return unary_case(r, ops::sigmoid); }},
      {"gelu", [](Rng& r, const GradCheckOptions&) { return unary_case(r, ops::gelu); }},
      {"softmax",
       [](Rng& r, const GradCheckOptions&) {
         const Shape s{pick(r, 1, 8), pick(r, 1, 8), pick(r, 1, 3)};
         const std::size_t axis = pick(r, 0, 2);
         Tensor x = random_tensor(s, r), w = random_tensor(s, r, false);
         return Case{[=] { return project(ops::softmax(x, axis), w); }, {x}};
       }},
      {"layer_norm",
       [](Rng& r, const GradCheckOptions&) {
         const std::size_t n = pick(r, 1, 8), d = pick(r, 2, 8);
         // Rows with near-zero spread sit where the eps term dominates and
         // the third derivative explodes; redraw those.
         std::vector<double> xs(n * d);
         for (std::size_t i = 0; i < n; ++i) {
           double var = 0.0;
           do {
             double mu = 0.0;
             for (std::size_t j = 0; j < d; ++j) mu += (xs[i * d + j] = r.normal()) / double(d);
             var = 0.0;
             for (std::size_t j = 0; j < d; ++j) var += (xs[i * d + j] - mu) * (xs[i * d + j] - mu) / double(d);
           } while (var < 0.1);
         }
         Tensor x = Tensor::from({n, d}, std::move(xs), true), g = random_tensor({d}, r), b = random_tensor({d}, r);
         Tensor w = random_tensor({n, d}, r, false);
         return Case{[=] { return project(ops::layer_norm(x, g, b, 1e-5), w); }, {x, g, b}};
       }},
      {"mean",
       [](Rng& r, const GradCheckOptions&) {
         const Shape s{pick(r, 1, 8), pick(r, 1, 8), pick(r, 1, 4)};
         std::vector<std::size_t> axes;
         for (std::size_t a = 0; a < 3; ++a)
           if (r.uniform() < 0.5) axes.push_back(a);
         Tensor x = random_tensor(s, r);
         const Tensor probe = ops::mean(x.detach(), axes);
         Tensor w = random_tensor(probe.shape(), r, false);
         return Case{[=] { return project(ops::mean(x, axes), w); }, {x}};
       }},
      {"sum",
       [](Rng& r, const GradCheckOptions&) {
         Tensor x = random_tensor({pick(r, 1, 8), pick(r, 1, 8)}, r), w = random_tensor(x.shape(), r, false);
         return Case{[=] { return ops::sum(ops::mul(ops::mul(x, x), w)); }, {x}};
       }},
      {"concat_slice",
       [](Rng& r, const GradCheckOptions&) {
         const std::size_t axis = pick(r, 0, 1), rows = pick(r, 1, 4), cols = pick(r, 1, 4);
         Shape sa{rows, cols}, sb{rows, cols};
         sb[axis] = pick(r, 1, 4);
         Tensor a = random_tensor(sa, r), b = random_tensor(sb, r);
         const std::size_t total = sa[axis] + sb[axis];
         const std::size_t begin = pick(r, 0, total - 1), end = pick(r, begin + 1, total);
         Shape so = sa;
         so[axis] = end - begin;
         Tensor w = random_tensor(so, r, false);
         return Case{[=] { return project(ops::slice(ops::concat({a, b}, axis), axis, begin, end), w); }, {a, b}};
       }},
      {"attention", [](Rng& r, const GradCheckOptions&) { return attention_case(r); }},
      {"rotary",
       [](Rng& r, const GradCheckOptions&) {
         const std::size_t heads = pick(r, 1, 2), hd = 2 * pick(r, 1, 2), n = pick(r, 1, 8), off = pick(r, 0, 5);
         Tensor x = random_tensor({n, heads * hd}, r), w = random_tensor({n, heads * hd}, r, false);
         return Case{[=] { return project(ops::rotary(x, heads, off), w); }, {x}};
       }},
      {"cross_entropy",
       [](Rng& r, const GradCheckOptions&) {
         const std::size_t n = pick(r, 1, 8), c = pick(r, 2, 8);
         Tensor x = random_tensor({n, c}, r);
         std::vector<int> labels(n);
         for (int& l : labels) l = int(pick(r, 0, c - 1));
         const double norm = double(n * c);
         return Case{[=] { return ops::cross_entropy(x, labels, norm); }, {x}};
       }},
      {"block:encoder",
       [](Rng& r, const GradCheckOptions& o) {
         EncoderConfig cfg;
         cfg.input_width = pick(r, 1, 8);
         cfg.hidden_width = pick(r, 1, 8);
         cfg.output_width = pick(r, 1, 8);
         cfg.groups = pick(r, 1, 3);
         cfg.layers = pick(r, 1, 3);
         auto enc = std::make_shared<Encoder>(cfg, r);
         ParameterSet ps;
         enc->collect(ps, "enc");
         redraw(ps, r);
         const std::size_t n = pick(r, 1, 8);
         Tensor x = random_tensor({n, cfg.input_width}, r), w = random_tensor({n, cfg.groups, cfg.output_width}, r, false);
         auto leaves = param_leaves(ps);
         leaves.push_back(x);
         return Case{[=] { return project(enc->forward(x), w); }, leaves, o.coords_per_tensor * 4};
       }},
      {"block:hbrtb",
       [](Rng& r, const GradCheckOptions& o) {
         const HbrtConfig cfg = random_hbrt(r, 4);
         const std::size_t index = pick(r, 0, 3);
         auto layer = std::make_shared<HbrtLayer>(cfg, index, r);
         ParameterSet ps;
         layer->collect(ps, "layer");
         redraw(ps, r);
         const std::size_t k = pick(r, 1, 8);
         Tensor x = random_tensor({k, cfg.width}, r), mem = random_tensor({cfg.memory, cfg.width}, r, true, 0.5);
         Tensor wy = random_tensor({k, cfg.width}, r, false), wm = random_tensor({cfg.memory, cfg.width}, r, false);
         auto leaves = param_leaves(ps);
         leaves.push_back(x);
         leaves.push_back(mem);
         return Case{[=] {
                       auto [y, next] = layer->forward(x, mem);
                       return ops::add(project(y, wy), project(next, wm));
                     },
                     leaves, o.coords_per_tensor};
       }},
      {"block:hbrt_step",
       [](Rng& r, const GradCheckOptions& o) {
         const HbrtConfig cfg = random_hbrt(r, pick(r, 1, 3));
         auto net = std::make_shared<Hbrt>(cfg, r);
         ParameterSet ps;
         net->collect(ps, "hbrt");
         redraw(ps, r);
         const std::size_t k = pick(r, 1, 8);
         MemoryBank bank = MemoryBank::zeros(cfg);
         for (Tensor& t : bank.layers) t = random_tensor(t.shape(), r, false, 0.5);
         Tensor x = random_tensor({k, cfg.width}, r), w = random_tensor({k, cfg.width}, r, false);
         std::vector<Tensor> wm;
         for (std::size_t i = 0; i < cfg.layers; ++i) wm.push_back(random_tensor({cfg.memory, cfg.width}, r, false));
         auto leaves = param_leaves(ps);
         leaves.push_back(x);
         return Case{[=] {
                       auto [s, next] = net->forward_attached(x, bank);
                       Tensor total = project(s, w);
                       for (std::size_t i = 0; i < next.size(); ++i) total = ops::add(total, project(next[i], wm[i]));
                       return total;
                     },
                     leaves, o.coords_per_tensor};
       }},
      {"block:agent",
       [](Rng& r, const GradCheckOptions& o) {
         AgentConfig cfg;
         cfg.classes = pick(r, 2, 6);
         cfg.input_width = pick(r, 1, 8);
         cfg.refine_blocks = pick(r, 0, 3);
         cfg.refine_width = pick(r, 1, 6);
         auto agent = std::make_shared<Agent>(cfg, r);
         ParameterSet ps;
         agent->collect(ps, "agent");
         redraw(ps, r);
         const std::size_t k = pick(r, 1, 8);
         Tensor s = random_tensor({k, cfg.input_width}, r), w = random_tensor({k, cfg.classes}, r, false);
         auto leaves = param_leaves(ps);
         leaves.push_back(s);
         return Case{[=] { return project(agent->forward(s).logits, w); }, leaves, o.coords_per_tensor * 4};
       }},
      {"block:ce_loss",
       [](Rng& r, const GradCheckOptions& o) {
         AgentConfig cfg;
         cfg.classes = pick(r, 2, 6);
         cfg.input_width = pick(r, 1, 8);
         cfg.refine_blocks = pick(r, 0, 3);
         cfg.refine_width = pick(r, 1, 6);
         auto agent = std::make_shared<Agent>(cfg, r);
         ParameterSet ps;
         agent->collect(ps, "agent");
         redraw(ps, r);
         const std::size_t k = pick(r, 1, 8);
         Tensor s = random_tensor({k, cfg.input_width}, r);
         std::vector<int> labels(k);
         for (int& l : labels) l = int(pick(r, 0, cfg.classes - 1));
         const auto norm = r.uniform() < 0.5 ? CeNormalization::per_class : CeNormalization::mean;
         auto leaves = param_leaves(ps);
         leaves.push_back(s);
         return Case{[=] { return clip_cross_entropy(agent->forward(s), labels, norm); }, leaves, o.coords_per_tensor * 4};
       }},
      {"block:mc_loss",
       [](Rng& r, const GradCheckOptions& o) {
         const ModelConfig cfg = random_model(r);
         const std::size_t width = pick(r, 1, 6), classes = pick(r, 2, 4);
         auto model = std::make_shared<Model>(cfg, width, classes, r.next());
         redraw(model->parameters(), r);
         const std::size_t frames = pick(r, 1, 3 * cfg.clip.length());
         auto stream = std::make_shared<FeatureStream>(random_stream(r, frames, width, classes));
         std::vector<double> weights(cfg.clip.clip_count(frames));
         for (double& q : weights) q = r.uniform(0.0, 3.0);
         TrainerConfig tc;
         auto memories = std::make_shared<std::vector<MemoryBank>>(episode_memories(*model, *stream));
         return Case{[=] { return weighted_episode_loss(*model, *stream, weights, tc, nullptr, memories.get()); },
                     param_leaves(model->parameters()), o.coords_per_tensor};
       }},
  };
  return checks;
}

}  // namespace

double compare_gradients(const std::function<Tensor()>& loss, const std::vector<Tensor>& leaves, double step,
                         std::size_t max_coords, std::uint64_t sample_seed) {
  for (Tensor t : leaves) t.clear_grad();
  backward(loss());
  Rng rng(sample_seed);
  std::vector<double> analytic, numeric;
  const auto f = [&](const Tensor&) { return loss().item(); };
  for (const Tensor& leaf : leaves) {
    std::vector<std::size_t> coords(leaf.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > max_coords) {
      for (std::size_t i = 0; i < max_coords; ++i)
        std::swap(coords[i], coords[i + std::size_t(rng.uniform_int(0, std::int64_t(coords.size() - i) - 1))]);
      coords.resize(max_coords);
    }
    const auto fd = finite_difference_coordinates(f, leaf, coords, step);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      analytic.push_back(leaf.has_grad() ? leaf.grad()[coords[i]] : 0.0);
      numeric.push_back(fd[i]);
    }
  }
  return relative_error(analytic, numeric);
}

std::vector<std::string> gradient_check_names() {
  std::vector<std::string> out;
  for (const auto& [name, factory] : registry()) out.push_back(name);
  return out;
}

std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& options,
                                             const std::function<void(const GradCheckRow&)>& on_row) {
  std::vector<GradCheckRow> rows;
  std::size_t index = 0;
  for (const auto& [name, factory] : registry()) {
    ++index;
    if (!options.filter.empty() && name.find(options.filter) == std::string::npos) continue;
    GradCheckRow row{name, 0, 0.0, true};
    Rng rng(options.seed * 1000003u + index);
    for (std::size_t c = 0; c < options.cases; ++c) {
      const Case kase = factory(rng, options);
      const double err = compare_gradients(kase.loss, kase.leaves, options.step, kase.max_coords, rng.next());
      row.worst_error = std::max(row.worst_error, err);
      ++row.cases;
    }
    row.passed = row.worst_error <= options.tolerance;
    if (on_row) on_row(row);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace svtas
