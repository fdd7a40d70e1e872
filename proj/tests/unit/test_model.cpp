#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "svtas/error.hpp"
#include "svtas/kernels.hpp"
#include "svtas/model.hpp"
#include "svtas/ops.hpp"

using namespace svtas;
using test::randn;
namespace fs = std::filesystem;

namespace {

void fill(const ParameterSet& ps, double value) {
  for (const auto& [name, t] : ps) {
    Tensor leaf = t;
    for (double& v : leaf.mutable_values()) v = value;
  }
}

HbrtConfig small_hbrt(std::size_t layers = 2, std::size_t memory = 4) {
  HbrtConfig cfg;
  cfg.layers = layers;
  cfg.width = 8;
  cfg.memory = memory;
  cfg.heads = 2;
  cfg.window = 3;
  return cfg;
}

ModelConfig small_model(std::size_t memory = 6) {
  ModelConfig cfg;
  cfg.clip = {4, 2};
  cfg.hbrt = small_hbrt(2, memory);
  cfg.encoder.hidden_width = 6;
  cfg.agent.refine_blocks = 2;
  cfg.agent.refine_width = 5;
  return cfg;
}

}  // namespace

// ---- encoder -------------------------------------------------------------

TEST_CASE("encoder with zero weights outputs zeros") {
  Rng rng(1);
  Encoder enc(EncoderConfig{3, 5, 4, 2, 2}, rng);
  ParameterSet ps;
  enc.collect(ps, "e");
  fill(ps, 0.0);
  const Tensor y = enc.forward(randn({6, 3}, rng));
  CHECK(y.shape() == Shape{6, 2, 4});
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("encoder is position-wise") {
  Rng rng(2);
  Encoder enc(EncoderConfig{3, 5, 4, 2, 3}, rng);
  const Tensor x = randn({5, 3}, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 1};
  std::vector<double> px;
  for (std::size_t i : perm) px.insert(px.end(), x.values().begin() + long(i * 3), x.values().begin() + long(i * 3 + 3));
  const Tensor y = enc.forward(x), py = enc.forward(Tensor::from({5, 3}, px));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t j = 0; j < 8; ++j) CHECK(py.at(r * 8 + j) == y.at(perm[r] * 8 + j));
  CHECK_THROWS_AS(enc.forward(randn({5, 4}, rng)), ShapeError);
}

TEST_CASE("encoder gradients match finite differences") {
  Rng rng(3);
  Encoder enc(EncoderConfig{3, 4, 5, 2, 2}, rng);
  ParameterSet ps;
  enc.collect(ps, "e");
  const Tensor x = randn({4, 3}, rng), w = randn({4, 2, 5}, rng);
  const auto loss = [&] { return ops::sum(ops::mul(enc.forward(x), w)); };
  backward(loss());
  for (auto& [name, p] : ps) {
    const Tensor fd = finite_difference_gradient([&](const Tensor&) { return loss().item(); }, p);
    CHECK_MESSAGE(relative_error(p.grad(), fd.values()) <= 1e-6, name);
  }
}

// ---- HBRT ----------------------------------------------------------------

TEST_CASE("dilated window masks") {
  const auto allowed = [](const Tensor& m, std::size_t i, std::size_t t) { return m.at(i, t) == 0.0; };
  const Tensor causal = dilated_window_mask(5, 0, 8);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t t = 0; t < 5; ++t) CHECK(allowed(causal, i, t) == (t <= i));
  const Tensor ident = dilated_window_mask(4, 2, 8);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t t = 0; t < 4; ++t) CHECK(allowed(ident, i, t) == (t == i));
  const Tensor m = dilated_window_mask(6, 1, 2);
  for (std::size_t t = 0; t < 6; ++t) {
    CHECK(allowed(m, 4, t) == (t == 4 || t == 2));
    CHECK(allowed(m, 5, t) == (t == 5 || t == 3));
  }
  CHECK(m.at(4, 0) == -1e30);
}

TEST_CASE("a one-layer HBRT is a single block") {
  Rng rng(4);
  Hbrt net(small_hbrt(1), rng);
  MemoryBank bank = MemoryBank::zeros(net.config());
  bank.layers[0] = randn({4, 8}, rng);
  const Tensor x = randn({5, 8}, rng);
  const auto [s, next] = net.forward(x, bank);
  const auto [y, mem] = net.layer(0).forward(x, bank.layers[0]);
  CHECK(s.values().size() == y.values().size());
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(s.at(i) == y.at(i));
  for (std::size_t i = 0; i < mem.numel(); ++i) CHECK(next.layers[0].at(i) == mem.at(i));
  CHECK(next.clips_seen == 1);
  CHECK_FALSE(next.layers[0].requires_grad());
}

TEST_CASE("memory is read and inputs are distinguished") {
  Rng rng(5);
  Hbrt net(small_hbrt(), rng);
  const MemoryBank zero = MemoryBank::zeros(net.config());
  MemoryBank noisy = zero;
  for (Tensor& t : noisy.layers) t = randn(t.shape(), rng);
  const Tensor a = randn({6, 8}, rng), b = randn({6, 8}, rng);
  const auto sa = net.forward(a, zero).first, sb = net.forward(b, zero).first, sn = net.forward(a, noisy).first;
  CHECK(test::max_abs_diff(sa.values(), sb.values()) > 1e-6);
  CHECK(test::max_abs_diff(sa.values(), sn.values()) > 1e-6);
  CHECK(test::max_abs_diff(sa.values(), net.forward(a, zero).first.values()) == 0.0);
  MemoryBank wrong = zero;
  wrong.layers.pop_back();
  CHECK_THROWS_AS(net.forward(a, wrong), ShapeError);
}

TEST_CASE("closed gate keeps memory exactly") {
  Rng rng(6);
  HbrtLayer layer(small_hbrt(), 1, rng);
  ParameterSet ps;
  layer.collect(ps, "l");
  Tensor bias = ps.at("l.gate_current.bias");
  for (double& v : bias.mutable_values()) v = -1e9;
  const Tensor mem = randn({4, 8}, rng);
  const auto [y, next] = layer.forward(randn({5, 8}, rng), mem);
  for (std::size_t i = 0; i < mem.numel(); ++i) CHECK(next.at(i) == mem.at(i));
}

TEST_CASE("memory update is a convex combination") {
  Rng rng(7);
  HbrtLayer layer(small_hbrt(), 0, rng);
  const Tensor mem = randn({4, 8}, rng);
  const Tensor x = randn({5, 8}, rng);
  const auto [y, next] = layer.forward(x, mem);
  // recover g from next = mem + g (cand - mem) by probing with a second memory is
  // awkward; instead check each coordinate sits between old memory and some candidate
  // by re-running with the gate forced open.
  ParameterSet ps;
  layer.collect(ps, "l");
  Tensor bias = ps.at("l.gate_current.bias");
  const std::vector<double> saved(bias.values().begin(), bias.values().end());
  for (double& v : bias.mutable_values()) v = 1e9;
  const auto [y_open, cand] = layer.forward(x, mem);
  for (std::size_t i = 0; i < mem.numel(); ++i) {
    const double lo = std::min(mem.at(i), cand.at(i)), hi = std::max(mem.at(i), cand.at(i));
    CHECK(next.at(i) >= lo - 1e-12);
    CHECK(next.at(i) <= hi + 1e-12);
  }
  std::copy(saved.begin(), saved.end(), bias.mutable_values().begin());
}

TEST_CASE("ablated block reduces to the conv and feed-forward path") {
  Rng rng(8);
  HbrtLayer layer(small_hbrt(2, 4), 2, rng);  // 2^2 >= k: identity mask
  ParameterSet ps;
  layer.collect(ps, "l");
  for (const char* name : {"l.attn_out.weight", "l.attn_out.bias"}) {
    Tensor t = ps.at(name);
    for (double& v : t.mutable_values()) v = 0.0;
  }
  const Tensor x = randn({4, 8}, rng);
  const auto [y, next] = layer.forward(x, Tensor::zeros({4, 8}));
  nn::Conv1d conv;
  conv.weight = ps.at("l.conv.weight");
  conv.bias = ps.at("l.conv.bias");
  conv.dilation = 4;
  nn::LayerNorm norm;
  norm.gamma = ps.at("l.norm_ffn.gamma");
  norm.beta = ps.at("l.norm_ffn.beta");
  nn::Linear in, out;
  in.weight = ps.at("l.ffn_in.weight");
  in.bias = ps.at("l.ffn_in.bias");
  out.weight = ps.at("l.ffn_out.weight");
  out.bias = ps.at("l.ffn_out.bias");
  const Tensor h = ops::add(x, conv(x));
  const Tensor want = ops::add(h, out(ops::gelu(in(norm(h)))));
  for (std::size_t i = 0; i < want.numel(); ++i) CHECK(y.at(i) == doctest::Approx(want.at(i)).epsilon(1e-14));
}

TEST_CASE("conv taps are exactly 2^o apart") {
  Rng rng(9);
  for (std::size_t o = 0; o < 3; ++o) {
    HbrtLayer layer(small_hbrt(3), o, rng);
    ParameterSet ps;
    layer.collect(ps, "l");
    nn::Conv1d conv;
    conv.weight = ps.at("l.conv.weight");
    conv.bias = ps.at("l.conv.bias");
    conv.dilation = std::size_t{1} << o;
    std::vector<double> impulse(17 * 8, 0.0);
    impulse[8 * 8] = 1.0;  // t = 8, channel 0
    const Tensor y = conv(Tensor::from({17, 8}, impulse));
    for (std::size_t t = 0; t < 17; ++t) {
      const long off = long(t) - 8;
      const bool tap = off == 0 || std::abs(off) == long(conv.dilation);
      double deviation = 0.0;
      for (std::size_t c = 0; c < 8; ++c) deviation += std::abs(y.at(t, c) - conv.bias.at(c));
      CHECK((deviation > 0.0) == tap);
    }
  }
}

TEST_CASE("memory-off HBRT ignores history") {
  Rng rng(10);
  Hbrt net(small_hbrt(2, 0), rng);
  const MemoryBank bank = MemoryBank::zeros(net.config());
  CHECK_FALSE(bank.layers[0].defined());
  const Tensor a = randn({5, 8}, rng), b = randn({5, 8}, rng);
  const auto after_b = net.forward(b, bank).second;
  CHECK(test::max_abs_diff(net.forward(a, bank).first.values(), net.forward(a, after_b).first.values()) == 0.0);
}

TEST_CASE("HBRT block gradients match finite differences") {
  Rng rng(11);
  HbrtLayer layer(small_hbrt(), 1, rng);
  ParameterSet ps;
  layer.collect(ps, "l");
  Tensor x = randn({5, 8}, rng, true), mem = randn({4, 8}, rng, true);
  const auto loss = [&] {
    const auto [y, next] = layer.forward(x, mem);
    return ops::add(ops::sum(y), ops::sum(next));
  };
  backward(loss());
  for (auto& [name, p] : ps) {
    const Tensor fd = finite_difference_gradient([&](const Tensor&) { return loss().item(); }, p);
    if (name == "l.read_k.bias" || name == "l.write_k.bias") {
      // softmax is shift invariant per query, so unrotated key biases get nothing
      for (std::size_t i = 0; i < p.numel(); ++i) {
        CHECK(std::abs(p.grad()[i]) <= 1e-12);
        CHECK(std::abs(fd.at(i)) <= 1e-8);
      }
      continue;
    }
    CHECK_MESSAGE(relative_error(p.grad(), fd.values()) <= 1e-6, name);
  }
}

// ---- agent ---------------------------------------------------------------

TEST_CASE("agent with zero projection and no refinement is uniform") {
  Rng rng(12);
  Agent agent(AgentConfig{0, 5, 8, 4}, rng);
  ParameterSet ps;
  agent.collect(ps, "a");
  fill(ps, 0.0);
  const ActionLogits out = agent.forward(randn({3, 8}, rng));
  for (double p : out.probs) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("single-position agent only sees centre taps") {
  Rng rng(13);
  Agent agent(AgentConfig{3, 4, 6, 5}, rng);
  ParameterSet ps;
  agent.collect(ps, "a");
  const Tensor s = randn({1, 6}, rng);
  const ActionLogits out = agent.forward(s);
  nn::Linear proj;
  proj.weight = ps.at("a.project.weight");
  proj.bias = ps.at("a.project.bias");
  Tensor z = proj(s);
  for (int b = 0; b < 3; ++b) {
    const std::string p = "a.refine" + std::to_string(b);
    const Tensor w = ps.at(p + ".dilated.weight");  // [5, 4, 3]
    std::vector<double> centre(5 * 4);
    for (std::size_t o = 0; o < 5; ++o)
      for (std::size_t c = 0; c < 4; ++c) centre[o * 4 + c] = w.at((o * 4 + c) * 3 + 1);
    const Tensor wc = Tensor::from({4, 5}, [&] {
      std::vector<double> t(20);
      for (std::size_t o = 0; o < 5; ++o)
        for (std::size_t c = 0; c < 4; ++c) t[c * 5 + o] = centre[o * 4 + c];
      return t;
    }());
    const Tensor h = ops::gelu(ops::add_row(ops::matmul(z, wc), ps.at(p + ".dilated.bias")));
    const Tensor pw = ops::reshape(ps.at(p + ".pointwise.weight"), {4, 5});
    z = ops::add(z, ops::add_row(ops::matmul(h, ops::transpose(pw)), ps.at(p + ".pointwise.bias")));
  }
  for (std::size_t c = 0; c < 4; ++c) CHECK(out.logits.at(c) == doctest::Approx(z.at(c)).epsilon(1e-14));
}

TEST_CASE("refinement preserves length and probabilities normalise") {
  Rng rng(14);
  Agent agent(AgentConfig{4, 3, 6, 5}, rng);
  for (std::size_t k = 1; k <= 20; ++k) {
    const ActionLogits out = agent.forward(randn({k, 6}, rng));
    CHECK(out.logits.shape() == Shape{k, 3});
    for (std::size_t r = 0; r < k; ++r) CHECK(std::abs(out.probs[r * 3] + out.probs[r * 3 + 1] + out.probs[r * 3 + 2] - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(agent.forward(randn({2, 5}, rng)), ShapeError);
  CHECK_THROWS_AS(Agent(AgentConfig{1, 1, 6, 5}, rng), ConfigError);
}

TEST_CASE("decide picks the argmax with low-index ties") {
  ActionLogits a;
  a.positions = 3;
  a.classes = 3;
  a.logits = Tensor::from({3, 3}, {0, 1, 0, 2, 2, 1, 0, 0, 1});
  a.probs = row_softmax(a.logits.values(), 3);
  CHECK(decide(a, {3, 1}, 3) == std::vector<int>{1, 0, 2});
  CHECK(decide(a, {3, 2}, 5) == std::vector<int>{1, 1, 0, 0, 2});
}

TEST_CASE("decide matches argmax-then-repeat and is monotone invariant") {
  Rng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.uniform_int(0, 7), c = 2 + rng.uniform_int(0, 4), p = 1 + rng.uniform_int(0, 3);
    const std::size_t len = 1 + rng.uniform_int(0, std::int64_t(k * p) - 1);
    ActionLogits a;
    a.positions = k;
    a.classes = c;
    std::vector<double> z(k * c);
    for (double& v : z) v = double(rng.uniform_int(-3, 3));  // plenty of ties
    a.logits = Tensor::from({k, c}, z);
    a.probs = row_softmax(z, c);
    std::vector<int> want;
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t r = t / p;
      int best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (z[r * c + j] > z[r * c + std::size_t(best)]) best = int(j);
      want.push_back(best);
    }
    CHECK(decide(a, {k, p}, len) == want);
    ActionLogits b = a;
    std::vector<double> cubed(z);
    for (double& v : cubed) v = v * v * v + 5.0;
    b.logits = Tensor::from({k, c}, cubed);
    CHECK(decide(b, {k, p}, len) == want);
  }
}

// ---- model and checkpoints ----------------------------------------------

TEST_CASE("model step causality and memory effects") {
  Rng rng(16);
  const FeatureStream s = test::random_stream(rng, 40, 3, 3);
  Model model(small_model(), 3, 3, 7);
  NoGradGuard guard;
  const auto clips = make_clips(40, model.config().clip);
  std::vector<std::vector<double>> base;
  MemoryBank mem = model.initial_memory();
  for (const Clip& c : clips) {
    auto st = model.step(s, c, mem);
    base.emplace_back(st.action.logits.values().begin(), st.action.logits.values().end());
    mem = st.memory;
  }
  for (std::size_t j = 0; j < clips.size(); ++j) {
    FeatureStream altered = s;
    for (std::size_t t = (j + 1) * 8; t < 40; ++t) altered.features[t * 3] += 10.0;
    MemoryBank m = model.initial_memory();
    for (std::size_t i = 0; i <= j; ++i) {
      auto st = model.step(altered, clips[i], m);
      CHECK(std::equal(base[i].begin(), base[i].end(), st.action.logits.values().begin()));
      m = st.memory;
    }
  }
}

TEST_CASE("checkpoint layout and round trip") {
  const fs::path dir = fs::temp_directory_path() / "svtas_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ParameterSet ps{{"b", Tensor::from({2}, {1.5, -2.0}, true)}, {"a", Tensor::from({1, 1}, {0.25}, true)}};
  save_checkpoint(dir / "x.ckpt", ps);
  std::ifstream f(dir / "x.ckpt", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(f)), {});
  // magic, version, count, then "a": u16 len, 'a', u8 rank, 2 x u32, 1 float
  const std::string want = std::string("SVCK") + std::string("\x01\0\0\0", 4) + std::string("\x02\0\0\0", 4) +
                           std::string("\x01\0", 2) + "a" + std::string("\x02", 1) + std::string("\x01\0\0\0\x01\0\0\0", 8) +
                           std::string("\0\0\x80\x3e", 4) + std::string("\x01\0", 2) + "b" + std::string("\x01", 1) +
                           std::string("\x02\0\0\0", 4) + std::string("\0\0\xc0\x3f\0\0\0\xc0", 8);
  CHECK(bytes == want);
  ParameterSet other{{"a", Tensor::zeros({1, 1})}, {"b", Tensor::zeros({2})}};
  load_checkpoint(dir / "x.ckpt", other);
  CHECK(other["b"].at(0) == 1.5);
  CHECK(other["a"].item() == 0.25);
  ParameterSet wrong{{"a", Tensor::zeros({1, 2})}, {"b", Tensor::zeros({2})}};
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt", wrong), DataError);
}

TEST_CASE("model forward agrees across kernel tables") {
  if (!kernels::avx2_table()) return;
  Rng rng(17);
  const FeatureStream s = test::random_stream(rng, 30, 4, 3);
  Model model(small_model(), 4, 3, 3);
  const std::string before(kernels::active().name);
  std::vector<std::vector<double>> out[2];
  int i = 0;
  for (const char* name : {"scalar", "avx2"}) {
    kernels::select(name);
    NoGradGuard guard;
    MemoryBank m = model.initial_memory();
    for (const Clip& c : make_clips(30, model.config().clip)) {
      auto st = model.step(s, c, m);
      out[i].emplace_back(st.action.logits.values().begin(), st.action.logits.values().end());
      m = st.memory;
    }
    ++i;
  }
  kernels::select(before);
  for (std::size_t j = 0; j < out[0].size(); ++j) CHECK(test::max_abs_diff(out[0][j], out[1][j]) <= 1e-10);
}
