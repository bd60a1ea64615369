#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include <gripcvae/ad/adam.hpp>
#include <gripcvae/ad/checkpoint.hpp>
#include <gripcvae/ad/graph.hpp>
#include <gripcvae/errors.hpp>

#include "gradcheck.hpp"

using namespace gripcvae;
using namespace gripcvae::ad;

TEST_CASE("matmul against hand arithmetic") {
  Graph<float> g;
  const Var a = g.constant(Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}));
  const Var b = g.constant(Tensor<float>({3, 2}, {1, 0, 0, 1, 0, 0}));
  const Var c = g.matmul(a, b);
  CHECK(g.shape(c) == Shape{2, 2});
  CHECK(g.value(c).data == std::vector<float>{1, 2, 4, 5});

  const Var d = g.constant(Tensor<float>({3, 2}, {1, 2, 3, 4, 5, 6}));
  CHECK(g.value(g.matmul(a, d)).data == std::vector<float>{22, 28, 49, 64});
}

TEST_CASE("relu values and the zero subgradient") {
  Tensor<double> x({3}, {-1.0, 0.0, 2.0});
  x.requires_grad = true;
  Graph<double> g;
  const Var r = g.relu(g.parameter(x));
  CHECK(g.value(r).data == std::vector<double>{0, 0, 2});
  g.backward(g.sum(r));
  CHECK(x.grad == std::vector<double>{0, 0, 1});
}

TEST_CASE("simple backward cases") {
  Tensor<double> w({3}, {1.0, 2.0, 3.0});
  w.requires_grad = true;
  {
    Graph<double> g;
    g.backward(g.sum(g.parameter(w)));
    CHECK(w.grad == std::vector<double>{1, 1, 1});
  }
  w.zero_grad();
  {
    Graph<double> g;
    g.backward(g.sum(g.square(g.parameter(w))));
    CHECK(w.grad == std::vector<double>{2, 4, 6});
  }
}

TEST_CASE("unreachable parameters keep a zero gradient") {
  Tensor<double> used({2}, {1.0, 2.0}), unused({2}, {3.0, 4.0});
  used.requires_grad = unused.requires_grad = true;
  used.zero_grad();
  unused.zero_grad();
  Graph<double> g;
  const Var a = g.parameter(used);
  g.parameter(unused);
  g.backward(g.sum(a));
  CHECK(unused.grad == std::vector<double>{0, 0});
}

TEST_CASE("gradients accumulate across backward passes") {
  Tensor<double> w({2, 2}, {0.3, -0.2, 0.5, 0.9});
  w.requires_grad = true;
  auto run = [&] {
    Graph<double> g;
    const Var p = g.parameter(w);
    g.backward(g.sum(g.tanh(g.matmul(p, p))));
  };
  run();
  const auto once = w.grad;
  run();
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grad[i] == 2.0 * once[i]);
}

TEST_CASE("every op matches central differences") {
  Rng rng(12345);
  for (const auto& c : gradcheck::op_cases()) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) worst = std::max(worst, gradcheck::op_gradient_error(c, rng));
    INFO(c.name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("tiny CVAE loss gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    INFO("seed " << seed);
    CHECK(gradcheck::tiny_cvae_gradient_error(seed) < 1e-4);
  }
}

TEST_CASE("max pool ties route to the lowest index") {
  Tensor<double> x({1, 3, 2}, {1.0, 5.0, 2.0, 5.0, 2.0, 4.0});
  x.requires_grad = true;
  Graph<double> g;
  const Var m = g.max_over_points(g.parameter(x), 1);
  CHECK(g.value(m).data == std::vector<double>{2.0, 5.0});
  g.backward(g.sum(m));
  CHECK(x.grad == std::vector<double>{0, 1, 1, 0, 0, 0});
}

TEST_CASE("errors name shapes and domains") {
  Graph<float> g;
  const Var a = g.constant(Tensor<float>({2, 3}));
  const Var b = g.constant(Tensor<float>({2, 2}));
  try {
    g.matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[2, 2]") != std::string::npos);
  }
  CHECK_THROWS_AS(g.add(a, b), DimensionError);
  CHECK_THROWS_AS(g.log(g.constant(Tensor<float>({2}, {1.0f, 0.0f}))), DomainError);
  CHECK_THROWS_AS(g.sqrt(g.constant(Tensor<float>({1}, {-1.0f}))), DomainError);
  CHECK_NOTHROW(g.sqrt(g.constant(Tensor<float>({1}, {0.0f}))));
  CHECK_THROWS_AS(g.backward(a), DimensionError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
}

TEST_CASE("check_finite names the offending node") {
  Graph<float> g;
  const Var x = g.constant(Tensor<float>({1}, {100.0f}));
  const Var e = g.exp(x);
  g.set_name(e, "blowup");
  try {
    g.check_finite();
    FAIL("expected a domain error");
  } catch (const DomainError& err) {
    CHECK(std::string(err.what()).find("blowup") != std::string::npos);
  }
}

TEST_CASE("identical graphs are bit-identical") {
  Rng rng(3);
  Tensor<float> x({4, 8, 3}), w({3, 16});
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  for (auto& v : w.data) v = static_cast<float>(rng.normal());
  auto run = [&](Tensor<float>& wp) {
    Graph<float> g;
    const Var h = g.relu(g.matmul(g.constant(x), g.parameter(wp)));
    const Var loss = g.mean(g.square(g.max_over_points(h, 1)));
    g.backward(loss);
    return g.value(loss).data[0];
  };
  Tensor<float> w1 = w, w2 = w;
  w1.requires_grad = w2.requires_grad = true;
  CHECK(run(w1) == run(w2));
  CHECK(w1.grad == w2.grad);
}

TEST_CASE("adam: zero gradient leaves parameters but counts the step") {
  Tensor<float> p({3}, {1.0f, -2.0f, 0.5f});
  p.requires_grad = true;
  p.zero_grad();
  Adam opt({&p});
  opt.step();
  CHECK(p.data == std::vector<float>{1.0f, -2.0f, 0.5f});
  CHECK(opt.steps() == 1);
}

TEST_CASE("adam: first steps follow the bias-corrected recurrence") {
  Tensor<float> p({1}, {0.0f});
  p.requires_grad = true;
  Adam opt({&p});
  p.grad = {1.0f};
  opt.step();
  // m = 0.1, v = 0.001, mhat = vhat = 1, so p = -lr / (1 + eps).
  CHECK(p.data[0] == doctest::Approx(-1e-4 / (1.0 + 1e-8)).epsilon(1e-6));

  // Reference recurrence in double for a varying gradient sequence.
  const double grads[] = {1.0, -0.5, 2.0, 0.25, -3.0};
  double ref = -1e-4 / (1.0 + 1e-8), m = 0.1, v = 0.001;
  for (int t = 2; t <= 5; ++t) {
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    ref -= 1e-4 * mhat / (std::sqrt(vhat) + 1e-8);
    p.grad = {static_cast<float>(g)};
    opt.step();
    CHECK(p.data[0] == doctest::Approx(ref).epsilon(1e-5));
  }
  CHECK(opt.steps() == 5);
  CHECK(p.grad == std::vector<float>{0.0f});
}

TEST_CASE("adam: a quadratic decreases monotonically after warm-up") {
  Tensor<float> p({2}, {3.0f, -2.0f});
  p.requires_grad = true;
  AdamOptions opts;
  opts.lr = 1e-2;
  Adam opt({&p}, opts);
  double previous = 1e30;
  bool monotone = true;
  for (int step = 0; step < 1000; ++step) {
    Graph<float> g;
    const Var loss = g.sum(g.square(g.parameter(p)));
    const double value = g.value(loss).data[0];
    if (step >= 10 && value > previous) monotone = false;
    previous = value;
    g.backward(loss);
    opt.step();
  }
  CHECK(monotone);
  CHECK(previous < 1e-2);
}

TEST_CASE("checkpoint write then read is bit-identical") {
  Checkpoint c;
  c.meta = {{"kind", "test"}, {"step", 7}};
  Rng rng(1);
  Tensor<float> a({2, 3}), b({5});
  for (auto& v : a.data) v = static_cast<float>(rng.normal());
  for (auto& v : b.data) v = static_cast<float>(rng.normal());
  b.data[0] = -0.0f;
  c.tensors = {{"a", a}, {"b", b}};

  std::ostringstream out;
  write_checkpoint(c, out);
  std::istringstream in(out.str());
  const Checkpoint r = read_checkpoint(in);
  CHECK(r.meta == c.meta);
  REQUIRE(r.tensors.size() == 2);
  CHECK(r.at("a").shape == a.shape);
  CHECK(std::memcmp(r.at("a").data.data(), a.data.data(), a.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(r.at("b").data.data(), b.data.data(), b.size() * sizeof(float)) == 0);
  CHECK(!r.contains("c"));

  std::ostringstream again;
  write_checkpoint(r, again);
  CHECK(again.str() == out.str());

  std::istringstream truncated(out.str().substr(0, out.str().size() - 3));
  CHECK_THROWS(read_checkpoint(truncated));
  std::istringstream padded(out.str() + "zz");
  CHECK_THROWS(read_checkpoint(padded));
}

TEST_CASE("row-stable matmul rows do not depend on their neighbours") {
  Rng rng(21);
  Tensor<float> x({37, 45}), w({45, 70});
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  for (auto& v : w.data) v = static_cast<float>(rng.normal());
  Graph<float> fast;
  const auto reference = fast.value(fast.matmul(fast.constant(x), fast.constant(w))).data;
  Graph<float> g;
  g.set_row_stable(true);
  const auto all = g.value(g.matmul(g.constant(x), g.constant(w))).data;
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == doctest::Approx(reference[i]).epsilon(1e-4));
  for (std::size_t row : {0, 7, 8, 36}) {
    Tensor<float> one({1, 45});
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(row * 45), 45, one.data.begin());
    const auto single = g.value(g.matmul(g.constant(one), g.constant(w))).data;
    for (std::size_t j = 0; j < 70; ++j) CHECK(single[j] == all[row * 70 + j]);
  }
}
