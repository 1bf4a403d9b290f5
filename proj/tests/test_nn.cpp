#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "salgail/error.hpp"
#include "salgail/networks.hpp"
#include "salgail/nn/checkpoint.hpp"
#include "salgail/nn/layers.hpp"
#include "salgail/nn/optim.hpp"

using namespace salgail;
using namespace salgail::nn;
using salgail::testing::dot;
using salgail::testing::GradCheck;
using salgail::testing::random_tensor;

namespace {

constexpr double kTol = 1e-3;

// Checks every parameter and the input gradient of a single layer against
// central differences of loss = <layer(x), w>.
void check_layer(Layer& layer, std::vector<int> in_shape, std::mt19937_64& rng, bool train = true) {
  layer.init(rng);
  // Nudge parameters away from their init so BatchNorm's gamma/beta and
  // biases are not trivially 1/0.
  for (auto* p : layer.parameters())
    for (auto& v : p->value.data) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  Tensor x = random_tensor(std::move(in_shape), rng);
  const Tensor probe_out = layer.forward(x, train);
  const Tensor w = random_tensor(probe_out.shape, rng);
  Tensor grad_x;
  GradCheck gc;
  gc.loss = [&] { return dot(layer.forward(x, train), w); };
  gc.backprop = [&] {
    for (auto* p : layer.parameters()) p->zero_grad();
    layer.forward(x, train);
    grad_x = layer.backward(w);
  };
  gc.pattern = [&] {
    std::vector<char> out;
    layer.activation_pattern(out);
    return out;
  };
  std::vector<Tensor*> values{&x};
  std::vector<const Tensor*> grads{&grad_x};
  for (auto* p : layer.parameters()) {
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  const auto r = gc.run(values, grads, rng);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < kTol);
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("forward examples") {
    Dense d(3, 3);
    d.weight().value.fill(0.0);
    for (int i = 0; i < 3; ++i) d.weight().value[i * 3 + i] = 1.0;
    Tensor x({2, 3});
    x.data = {1, -2, 3, 0.5, 0.25, -4};
    CHECK(d.predict(x).data == x.data);

    LeakyReLU lr(0.2);
    Tensor m({1, 1}, -1.0);
    CHECK(lr.predict(m)[0] == doctest::Approx(-0.2));

    Softmax sm;
    const auto u = sm.predict(Tensor({1, 9}));
    for (double v : u.data) CHECK(v == doctest::Approx(1.0 / 9.0));
  }

  TEST_CASE("softmax rows sum to one and stay positive") {
    std::mt19937_64 rng(1);
    Softmax sm;
    const auto y = sm.predict(random_tensor({7, 9}, rng, 30.0));
    for (int r = 0; r < 7; ++r) {
      double s = 0;
      for (int k = 0; k < 9; ++k) {
        CHECK(y[r * 9 + k] > 0.0);
        s += y[r * 9 + k];
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }

  TEST_CASE("gradient check of every layer kind") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      std::mt19937_64 rng(seed);
      Conv2d conv(2, 3, 3, 2);
      check_layer(conv, {2, 2, 7, 7}, rng);
      Dense dense(5, 4);
      check_layer(dense, {3, 5}, rng);
      LeakyReLU lrelu(0.2);
      check_layer(lrelu, {3, 6}, rng);
      BatchNorm bn(3, 1e-5, 0.1);
      check_layer(bn, {4, 3, 2, 2}, rng);
      BatchNorm bn_flat(5, 1e-5, 0.1);
      check_layer(bn_flat, {6, 5}, rng);
      Softmax sm;
      check_layer(sm, {2, 9}, rng);
      Flatten fl;
      check_layer(fl, {2, 3, 2, 2}, rng);
    }
  }

  TEST_CASE("per-stream dense head: gradients and stream isolation") {
    std::mt19937_64 rng(21);
    StreamDense sd(3, 5, 4);
    sd.init(rng);
    Tensor x = random_tensor({4, 5}, rng);
    Tensor code({4, 3});
    for (int i = 0; i < 4; ++i) code[static_cast<std::size_t>(i * 3 + i % 3)] = 1.0;
    const Tensor w = random_tensor({4, 4}, rng);
    Tensor grad_x;
    GradCheck gc;
    gc.loss = [&] { return dot(sd.forward(x, code), w); };
    gc.backprop = [&] {
      for (auto* p : sd.parameters()) p->zero_grad();
      sd.forward(x, code);
      grad_x = sd.backward(w);
    };
    std::vector<Tensor*> values{&x, &sd.weight().value, &sd.bias().value};
    std::vector<const Tensor*> grads{&grad_x, &sd.weight().grad, &sd.bias().grad};
    gc.max_entries_per_tensor = 60;
    const auto r = gc.run(values, grads, rng);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < kTol);

    // Only the selected stream's slice produces the output.
    Tensor one({1, 3});
    one[1] = 1.0;
    const Tensor x1 = random_tensor({1, 5}, rng);
    const Tensor y = sd.predict(x1, one);
    for (int o = 0; o < 4; ++o) {
      double expected = sd.bias().value[static_cast<std::size_t>(4 + o)];
      for (int i = 0; i < 5; ++i) expected += sd.weight().value[static_cast<std::size_t>(20 + o * 5 + i)] * x1[static_cast<std::size_t>(i)];
      CHECK(y[static_cast<std::size_t>(o)] == doctest::Approx(expected));
    }
    CHECK_THROWS_AS(sd.predict(x1, Tensor({1, 2})), InputError);
  }

  TEST_CASE("concat gradient splits the upstream gradient") {
    std::mt19937_64 rng(2);
    Concat c;
    const auto a = random_tensor({2, 3}, rng), b = random_tensor({2, 4}, rng);
    const auto y = c.forward(a, b);
    CHECK(y.shape == std::vector<int>{2, 7});
    CHECK(y[0] == a[0]);
    CHECK(y[3] == b[0]);
    CHECK(y[7] == a[3]);
    const auto g = random_tensor({2, 7}, rng);
    const auto [ga, gb] = c.backward(g);
    CHECK(ga[4] == g[8]);
    CHECK(gb[5] == g[11]);
  }

  TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    std::mt19937_64 rng(3);
    Dense d(4, 2);
    d.init(rng);
    d.forward(random_tensor({3, 4}, rng), true);
    d.weight().zero_grad();
    d.bias().zero_grad();
    d.backward(Tensor({3, 2}));
    for (double g : d.weight().grad.data) CHECK(g == 0.0);
    for (double g : d.bias().grad.data) CHECK(g == 0.0);
  }

  TEST_CASE("linear layer gradient is x^T g") {
    std::mt19937_64 rng(4);
    Dense d(3, 2);
    d.init(rng);
    const auto x = random_tensor({4, 3}, rng), g = random_tensor({4, 2}, rng);
    d.weight().zero_grad();
    d.bias().zero_grad();
    d.forward(x, true);
    d.backward(g);
    for (int o = 0; o < 2; ++o)
      for (int i = 0; i < 3; ++i) {
        double s = 0;
        for (int n = 0; n < 4; ++n) s += g[n * 2 + o] * x[n * 3 + i];
        CHECK(d.weight().grad[o * 3 + i] == doctest::Approx(s).epsilon(1e-12));
      }
  }

  TEST_CASE("backward before forward is an error") {
    Dense d(2, 2);
    CHECK_THROWS(d.backward(Tensor({1, 2})));
  }

  TEST_CASE("shape mismatches are errors") {
    Dense d(3, 2);
    CHECK_THROWS_AS(d.predict(Tensor({1, 4})), InputError);
    Conv2d c(1, 2, 3, 1);
    CHECK_THROWS_AS(c.predict(Tensor({1, 2, 5, 5})), InputError);
  }

  TEST_CASE("eval forward is bit-deterministic and batch norm uses running stats") {
    std::mt19937_64 rng(5);
    BatchNorm bn(2, 1e-5, 0.1);
    bn.init(rng);
    const auto x = random_tensor({5, 2}, rng);
    bn.forward(x, true);
    CHECK(bn.running_mean()[0] != 0.0);
    const auto a = bn.predict(x), b = bn.predict(x);
    CHECK(a.data == b.data);
    const auto t = bn.forward(x, true);
    CHECK(t.data != a.data);  // batch stats differ from the running estimates
  }

  TEST_CASE("generator and critic networks pass the gradient check") {
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      std::mt19937_64 rng(100 + seed);
      const NetworkShape shape{1, 24, 3};
      const int n = 3;
      const auto obs = random_tensor({n, 1, 24, 24}, rng);
      Tensor code({n, 3});
      for (int i = 0; i < n; ++i) code[i * 3 + i % 3] = 1.0;

      GeneratorNet g(shape, 0.01);
      g.init(rng);
      const auto wl = random_tensor({n, 9}, rng), wv = random_tensor({n, 1}, rng);
      GradCheck gc;
      gc.loss = [&] {
        const auto o = g.forward(obs, code, true);
        return dot(o.logits, wl) + dot(o.value, wv);
      };
      gc.backprop = [&] {
        g.zero_grad();
        g.forward(obs, code, true);
        g.backward(wl, wv);
      };
      gc.pattern = [&] {
        std::vector<char> p;
        g.activation_pattern(p);
        return p;
      };
      std::vector<Tensor*> values;
      std::vector<const Tensor*> grads;
      for (auto* p : g.parameters()) {
        values.push_back(&p->value);
        grads.push_back(&p->grad);
      }
      const auto r = gc.run(values, grads, rng);
      CHECK(r.checked > 50);
      CHECK(r.max_rel_error < kTol);

      CriticNet c(shape, 0.2, 1e-5, 0.1);
      c.init(rng);
      Tensor act({n, 9});
      for (int i = 0; i < n; ++i) act[i * 9 + (2 * i) % 9] = 1.0;
      const auto wd = random_tensor({n, 1}, rng), ws = random_tensor({n, 3}, rng);
      GradCheck cc;
      cc.loss = [&] {
        const auto o = c.forward(obs, act, true);
        return dot(o.d_logit, wd) + dot(o.s_logits, ws);
      };
      cc.backprop = [&] {
        c.zero_grad();
        c.forward(obs, act, true);
        c.backward(wd, ws);
      };
      cc.pattern = [&] {
        std::vector<char> p;
        c.activation_pattern(p);
        return p;
      };
      values.clear();
      grads.clear();
      for (auto* p : c.parameters()) {
        values.push_back(&p->value);
        grads.push_back(&p->grad);
      }
      const auto rc = cc.run(values, grads, rng);
      CHECK(rc.checked > 50);
      CHECK(rc.max_rel_error < kTol);
    }
  }

  TEST_CASE("critic parameter groups share the trunk and split the heads") {
    CriticNet c({1, 24, 3}, 0.2, 1e-5, 0.1);
    const auto all = c.parameters(), d = c.discriminator_parameters(), s = c.selector_parameters();
    CHECK(d.size() + s.size() > all.size());
    CHECK(d.front() == s.front());
    CHECK(d.back() != s.back());
    CHECK_THROWS_AS(trunk_extent(16), ConfigError);
  }

  TEST_CASE("optimizer: zero gradient leaves parameters unchanged") {
    for (auto kind : {OptimizerKind::Adam, OptimizerKind::RmsProp}) {
      Parameter p("p", {3});
      p.value.data = {1, -2, 3};
      OptimizerState st;
      st.config = {kind, 0.1, 0.0};
      std::vector<Parameter*> ps{&p};
      optimizer_step(st, ps);
      CHECK(p.value.data == std::vector<double>{1, -2, 3});
    }
  }

  TEST_CASE("optimizer: hand-computed Adam and RMSprop scalar steps") {
    Parameter p("p", {1});
    p.value[0] = 0.5;
    p.grad[0] = 0.2;
    OptimizerState adam;
    adam.config = {OptimizerKind::Adam, 0.01, 0.0};
    std::vector<Parameter*> ps{&p};
    optimizer_step(adam, ps);
    // m = 0.1*0.2 = 0.02, v = 0.001*0.04; bias-corrected m/sqrt(v) = 0.2/0.2 = 1.
    const double mhat = 0.02 / 0.1, vhat = 0.00004 / 0.001;
    CHECK(p.value[0] == doctest::Approx(0.5 - 0.01 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-7));  // float32 storage

    Parameter q("q", {1});
    q.value[0] = 0.5;
    q.grad[0] = 0.2;
    OptimizerState rms;
    rms.config = {OptimizerKind::RmsProp, 0.01, 0.0};
    std::vector<Parameter*> qs{&q};
    optimizer_step(rms, qs);
    const double v = 0.01 * 0.04;
    CHECK(q.value[0] == doctest::Approx(0.5 - 0.01 * 0.2 / (std::sqrt(v) + 1e-8)).epsilon(1e-7));  // float32 storage
  }

  TEST_CASE("optimizer: decay-only step shrinks the parameter norm") {
    Parameter p("p", {4});
    p.value.data = {1, -2, 0.5, 3};
    const double before = std::sqrt(dot(p.value, p.value));
    OptimizerState st;
    st.config = {OptimizerKind::Adam, 1e-3, 2e-3};
    std::vector<Parameter*> ps{&p};
    optimizer_step(st, ps);
    CHECK(std::sqrt(dot(p.value, p.value)) < before);
  }

  TEST_CASE("optimizer: non-finite gradients raise a numerical error naming the tensor") {
    Parameter p("layer.weight", {2});
    p.grad[1] = std::numeric_limits<double>::quiet_NaN();
    OptimizerState st;
    std::vector<Parameter*> ps{&p};
    try {
      optimizer_step(st, ps);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
    }
  }

  TEST_CASE("gradient clipping bounds the joint norm") {
    Parameter a("a", {2}), b("b", {1});
    a.grad.data = {3, 0};
    b.grad.data = {4};
    std::vector<Parameter*> ps{&a, &b};
    CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
    CHECK(a.grad[0] == doctest::Approx(0.6));
    CHECK(b.grad[0] == doctest::Approx(0.8));
    CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(1.0));
    CHECK(a.grad[0] == doctest::Approx(0.6));
  }

  TEST_CASE("checkpoint round trip is bit exact for float32 values") {
    const auto dir = std::filesystem::temp_directory_path() / "salgail_nn_ckpt";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(9);
    auto t = random_tensor({3, 4}, rng);
    round_to_float(t);
    save_checkpoint(dir / "c.sgail", {{"seed", 9}}, {{"w", t}});
    const auto ck = load_checkpoint(dir / "c.sgail");
    CHECK(ck.header.at("seed") == 9);
    CHECK(ck.find("w").data == t.data);
    CHECK(ck.find("w").shape == t.shape);
    CHECK_THROWS(ck.find("missing"));
    {
      std::ofstream f(dir / "bad.sgail", std::ios::binary);
      f << "NOTMAGIC";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.sgail"), InputError);
    std::filesystem::remove_all(dir);
  }
}
