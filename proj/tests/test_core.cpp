#include "oracles.hpp"

#include "diffgan/adamw.hpp"
#include "diffgan/checkpoint.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace diffgan;
using namespace diffgan::testing;

TEST_CASE("fully-connected identity passes input through") {
  ParameterSet<float> ps;
  ps.add("fc.w", Tensor<float>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  ps.add("fc.b", Tensor<float>::zeros({3}));
  const LayerConfig cfg{LayerKind::dense, "fc", 3, 3};
  const auto y = layer_forward(cfg, ps, Tensor<float>({3}, {1, 2, 3}));
  CHECK(y == Tensor<float>({3}, {1, 2, 3}));
}

TEST_CASE("sigmoid of zero is one half") {
  const LayerConfig cfg{LayerKind::sigmoid, "s"};
  CHECK(layer_forward(cfg, ParameterSet<float>{}, Tensor<float>({1}, {0.0f}))[0] == doctest::Approx(0.5));
}

TEST_CASE("unit-kernel conv scales a single channel") {
  ParameterSet<float> ps;
  ps.add("c.w", Tensor<float>({1, 1, 1}, {2.0f}));
  ps.add("c.b", Tensor<float>::zeros({1}));
  const LayerConfig cfg{LayerKind::conv1d, "c", 1, 1, 1};
  const auto y = layer_forward(cfg, ps, Tensor<float>({1, 3, 1}, {1, 1, 1}));
  CHECK(y == Tensor<float>({1, 3, 1}, {2, 2, 2}));
}

TEST_CASE("layer shape mismatch names the layer and dimensions") {
  RngStream rng(1);
  const LayerConfig cfg{LayerKind::dense, "head", 4, 2};
  const auto ps = init_layer<float>(cfg, rng);
  try {
    layer_forward(cfg, ps, Tensor<float>::zeros({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("head") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
    CHECK(msg.find("2,3") != std::string::npos);
  }
}

TEST_CASE("conv stride 2 halves the length") {
  RngStream rng(2);
  const LayerConfig cfg{LayerKind::conv1d, "down", 3, 5, 3, 2};
  const auto y = layer_forward(cfg, init_layer<float>(cfg, rng), Tensor<float>::zeros({2, 8, 3}));
  CHECK(y.shape() == Shape{2, 4, 5});
}

TEST_CASE("backward of sum(w * x) is x") {
  Graph<double> g;
  const auto w = g.leaf(Tensor<double>({3}, {0.5, -1, 2}), true);
  const auto x = g.constant(Tensor<double>({3}, {4, 5, 6}));
  g.backward(sum(mul(w, x)));
  CHECK(g.grad(w) == Tensor<double>({3}, {4, 5, 6}));
}

TEST_CASE("backward of squared norm at (3, 4) is (6, 8)") {
  Graph<double> g;
  const auto w = g.leaf(Tensor<double>({2}, {3, 4}), true);
  g.backward(sum(mul(w, w)));
  CHECK(g.grad(w) == Tensor<double>({2}, {6, 8}));
}

TEST_CASE("backward rejects a non-scalar loss") {
  Graph<double> g;
  const auto w = g.leaf(Tensor<double>({2}, {3, 4}), true);
  CHECK_THROWS_AS(g.backward(mul(w, w)), ContractError);
}

TEST_CASE("two-layer MLP gradient matches central differences") {
  RngStream rng(7);
  ParameterSet<double> ps;
  ps.add("l1.w", random_tensor(rng, {4, 6}, 0.5));
  ps.add("l1.b", random_tensor(rng, {6}, 0.1));
  ps.add("l2.w", random_tensor(rng, {6, 3}, 0.5));
  ps.add("l2.b", random_tensor(rng, {3}, 0.1));
  const Tensor<double> x = random_tensor(rng, {5, 4});
  const LossFn loss = [&](Graph<double>& g, const BoundParams<double>& p) {
    const auto h = silu(linear(g.constant(x), p["l1.w"], p["l1.b"]));
    return project(linear(h, p["l2.w"], p["l2.b"]), 99);
  };
  const GradCheck r = check_gradients(ps, loss, rng, 100);
  INFO(r.worst);
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("every layer kind passes finite-difference checks") {
  for (const std::string& kind : gradient_kinds()) {
    const GradCheck r = gradient_trials(kind, 25, 11);
    INFO(kind << ": " << r.worst);
    CHECK(r.max_rel < 1e-3);
    CHECK(r.checked > 0);
  }
}

TEST_CASE("frozen parameters receive no gradient entry") {
  Graph<float> g;
  ParameterSet<float> ps;
  ps.add("a", Tensor<float>({1}, {1.0f}));
  ps.add("b", Tensor<float>({1}, {2.0f}), false);
  const BoundParams<float> p(g, ps);
  g.backward(sum(mul(p["a"], p["b"])));
  const auto grads = collect_gradients(g, p, ps);
  CHECK(grads.size() == 1);
  CHECK(grads.count("a") == 1);
}

// --- AdamW -------------------------------------------------------------------------------

TEST_CASE("adamw with zero gradients and no decay leaves parameters unchanged") {
  ParameterSet<float> ps;
  ps.add("w", Tensor<float>({2}, {1.5f, -2.0f}));
  AdamWState<float> st(AdamWOptions{0.01, 0.9, 0.999, 1e-8, 0.0});
  adamw_step(ps, {{"w", Tensor<float>::zeros({2})}}, st);
  CHECK(ps.at("w") == Tensor<float>({2}, {1.5f, -2.0f}));
  CHECK(st.t == 1);
}

TEST_CASE("adamw with zero gradients applies decoupled decay only") {
  ParameterSet<float> ps;
  ps.add("w", Tensor<float>({2}, {1.0f, -3.0f}));
  AdamWState<float> st(AdamWOptions{0.01, 0.9, 0.999, 1e-8, 0.1});
  adamw_step(ps, {{"w", Tensor<float>::zeros({2})}}, st);
  CHECK(ps.at("w")[0] == doctest::Approx(1.0 * (1 - 0.001)).epsilon(1e-7));
  CHECK(ps.at("w")[1] == doctest::Approx(-3.0 * (1 - 0.001)).epsilon(1e-7));
}

TEST_CASE("adamw first step with unit gradient moves by about lr") {
  ParameterSet<float> ps;
  ps.add("w", Tensor<float>({1}, {0.0f}));
  AdamWState<float> st(AdamWOptions{0.1, 0.9, 0.999, 1e-8, 0.0});
  adamw_step(ps, {{"w", Tensor<float>({1}, {1.0f})}}, st);
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
  CHECK(ps.at("w")[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adamw rejects non-finite gradients and names the parameter") {
  ParameterSet<float> ps;
  ps.add("enc.w", Tensor<float>({1}, {0.0f}));
  AdamWState<float> st;
  try {
    adamw_step(ps, {{"enc.w", Tensor<float>({1}, {NAN})}}, st);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("enc.w") != std::string::npos);
  }
  CHECK(st.t == 0);
}

TEST_CASE("adamw step counter increments by one per step") {
  ParameterSet<float> ps;
  ps.add("w", Tensor<float>({1}, {1.0f}));
  AdamWState<float> st;
  for (int i = 1; i <= 5; ++i) {
    adamw_step(ps, {{"w", Tensor<float>({1}, {0.3f})}}, st);
    CHECK(st.t == i);
    CHECK(st.m.at("w").shape() == ps.at("w").shape());
  }
}

// --- RNG -----------------------------------------------------------------------------------

TEST_CASE("gaussian sampling is deterministic per seed and call order") {
  RngStream a(42), b(42);
  const auto a1 = sample_gaussian<float>(a, {16});
  const auto a2 = sample_gaussian<float>(a, {16});
  CHECK_FALSE(a1 == a2);
  CHECK(sample_gaussian<float>(b, {16}) == a1);
  CHECK(sample_gaussian<float>(b, {16}) == a2);
}

TEST_CASE("gaussian sample moments over 1e6 draws") {
  RngStream rng(3);
  const auto x = sample_gaussian<double>(rng, {1000000});
  const double mean = x.data().mean();
  const double var = (x.data().array() - mean).square().sum() / (x.size() - 1);
  CHECK(std::abs(mean) < 0.01);
  CHECK(var > 0.99);
  CHECK(var < 1.01);
}

TEST_CASE("gaussian sample of shape [0] is empty") {
  RngStream rng(3);
  CHECK(sample_gaussian<float>(rng, {0}).size() == 0);
}

TEST_CASE("substreams do not shift when another consumer draws") {
  const RngStream root(9);
  RngStream noise1 = root.substream("noise");
  RngStream init = root.substream("init");
  for (int i = 0; i < 10; ++i) init.normal();
  RngStream noise2 = root.substream("noise");
  CHECK(noise1.normal() == noise2.normal());
  CHECK(root.substream("a").seed() != root.substream("b").seed());
}

// --- checkpoints -----------------------------------------------------------------------------

TEST_CASE("checkpoint round-trip is byte exact") {
  RngStream rng(5);
  Checkpoint c;
  c.seed = 123;
  c.metadata = {{"kind", "test"}};
  c.params.add("b.w", sample_gaussian<float>(rng, {3, 4}));
  c.params.add("a.b", sample_gaussian<float>(rng, {4}), false);
  AdamWState<float> st;
  st.t = 7;
  st.m.emplace("b.w", sample_gaussian<float>(rng, {3, 4}));
  st.v.emplace("b.w", sample_gaussian<float>(rng, {3, 4}));
  c.optimizers.emplace("opt", st);

  const std::string bytes = encode_checkpoint(c);
  const Checkpoint d = decode_checkpoint(bytes);
  CHECK(d.seed == 123);
  CHECK(d.metadata == c.metadata);
  CHECK(d.params == c.params);
  CHECK_FALSE(d.params.requires_grad("a.b"));
  CHECK(d.optimizers.at("opt").t == 7);
  CHECK(d.optimizers.at("opt").m.at("b.w") == st.m.at("b.w"));
  CHECK(encode_checkpoint(d) == bytes);

  const auto dir = std::filesystem::temp_directory_path() / "diffgan_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(c, dir / "a.ckpt");
  save_checkpoint(d, dir / "b.ckpt");
  CHECK(file_digest(dir / "a.ckpt") == file_digest(dir / "b.ckpt"));
  CHECK(load_checkpoint(dir / "a.ckpt").params == c.params);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt checkpoint bytes are rejected") {
  Checkpoint c;
  c.params.add("w", Tensor<float>({2}, {1, 2}));
  std::string bytes = encode_checkpoint(c);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(decode_checkpoint("not a checkpoint"), FormatError);
}
