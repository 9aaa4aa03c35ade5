#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cgnn/errors.hpp"
#include "cgnn/finite_diff.hpp"
#include "cgnn/rng.hpp"
#include "cgnn/tape.hpp"
#include "cgnn/tensor.hpp"

using namespace cgnn;

namespace {

Tensor<double> vec(std::vector<double> v) {
  Shape s{static_cast<std::int64_t>(v.size())};
  return Tensor<double>(s, std::move(v));
}

Tensor<double> random_tensor(RngStream& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Finite-difference check of one scalar-valued tape program against its
// backward pass, elementwise, at the spec'd tolerance.
void check_gradients(const std::map<std::string, Tensor<double>>& leaves,
                     const std::function<Tape<double>::Id(
                         Tape<double>&, std::map<std::string, Tape<double>::Id>&)>& program,
                     double tol = 1e-4) {
  Tape<double> tape;
  std::map<std::string, Tape<double>::Id> ids;
  for (const auto& [name, t] : leaves) {
    Tensor<double> p = t;
    p.requires_grad = true;
    ids[name] = tape.leaf(p, name);
  }
  auto loss = program(tape, ids);
  auto analytic = tape.backward(loss);

  auto objective = [&](const std::map<std::string, Tensor<double>>& point) {
    Tape<double> t2;
    std::map<std::string, Tape<double>::Id> ids2;
    for (const auto& [name, tensor] : point) ids2[name] = t2.constant(tensor);
    return t2.value(program(t2, ids2))[0];
  };
  auto numeric = finite_difference_gradient<double>(objective, leaves, 1e-5);
  for (const auto& [name, fd] : numeric) {
    CAPTURE(name);
    CHECK(max_relative_error(analytic.at(name), fd) <= tol);
  }
}

}  // namespace

TEST_CASE("sigmoid of zero is one half") {
  Tape<double> tape;
  auto x = tape.constant(vec({0.0}));
  CHECK(tape.value(tape.sigmoid(x))[0] == 0.5);
}

TEST_CASE("matmul by the identity returns the vector") {
  Tape<double> tape;
  Tensor<double> eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  auto x = vec({0.3, -1.7, 2.5});
  auto y = tape.matmul(tape.constant(eye), tape.constant(x));
  for (int i = 0; i < 3; ++i) CHECK(tape.value(y)[i] == x[i]);
}

TEST_CASE("concat joins vectors in order") {
  Tape<double> tape;
  auto y = tape.concat({tape.constant(vec({1, 2})), tape.constant(vec({3}))});
  CHECK(tape.value(y).shape() == Shape{3});
  CHECK(tape.value(y)[0] == 1.0);
  CHECK(tape.value(y)[1] == 2.0);
  CHECK(tape.value(y)[2] == 3.0);
}

TEST_CASE("slice takes the half-open range") {
  Tape<double> tape;
  auto y = tape.slice(tape.constant(vec({5, 6, 7, 8})), 1, 3);
  CHECK(tape.value(y).shape() == Shape{2});
  CHECK(tape.value(y)[0] == 6.0);
  CHECK(tape.value(y)[1] == 7.0);
}

TEST_CASE("grad of sum of squares is two x") {
  Tape<double> tape;
  Tensor<double> x = vec({1, -2, 3});
  x.requires_grad = true;
  auto xi = tape.leaf(x, "x");
  auto loss = tape.sum(tape.hadamard(xi, xi));
  auto grads = tape.backward(loss);
  CHECK(grads.at("x")[0] == doctest::Approx(2.0));
  CHECK(grads.at("x")[1] == doctest::Approx(-4.0));
  CHECK(grads.at("x")[2] == doctest::Approx(6.0));
}

TEST_CASE("grad of sigmoid(w.x) at zero weights is a quarter times x") {
  Tape<double> tape;
  Tensor<double> w(Shape{1, 2});
  w.requires_grad = true;
  auto wi = tape.leaf(w, "w");
  auto x = tape.constant(vec({1, 0}));
  auto loss = tape.sum(tape.sigmoid(tape.matmul(wi, x)));
  auto grads = tape.backward(loss);
  CHECK(grads.at("w")[0] == doctest::Approx(0.25));
  CHECK(grads.at("w")[1] == doctest::Approx(0.0));
}

TEST_CASE("a leaf used twice accumulates both path gradients") {
  Tape<double> tape;
  Tensor<double> x = vec({1.5});
  x.requires_grad = true;
  auto xi = tape.leaf(x, "x");
  auto grads = tape.backward(tape.sum(tape.add(xi, xi)));
  CHECK(grads.at("x")[0] == doctest::Approx(2.0));
}

TEST_CASE("leaves unreachable from the loss get zero gradients") {
  Tape<double> tape;
  Tensor<double> x = vec({1.0});
  Tensor<double> y = vec({2.0, 3.0});
  x.requires_grad = true;
  y.requires_grad = true;
  auto xi = tape.leaf(x, "x");
  tape.leaf(y, "unused");
  auto grads = tape.backward(tape.sum(xi));
  CHECK(grads.at("x")[0] == doctest::Approx(1.0));
  REQUIRE(grads.count("unused") == 1);
  CHECK(grads.at("unused").shape() == Shape{2});
  CHECK(grads.at("unused")[0] == 0.0);
  CHECK(grads.at("unused")[1] == 0.0);
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> tape;
  Tensor<double> x = vec({1, 2});
  x.requires_grad = true;
  auto xi = tape.leaf(x, "x");
  CHECK_THROWS_AS((void)tape.backward(xi), ContractError);
}

TEST_CASE("shape mismatches name the primitive and the shapes") {
  Tape<double> tape;
  auto a = tape.constant(vec({1, 2}));
  auto b = tape.constant(vec({1, 2, 3}));
  try {
    (void)tape.add(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2]") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
  }
}

TEST_CASE("non-finite results raise a numeric error") {
  Tape<double> tape;
  auto x = tape.constant(vec({-1.0}));
  CHECK_THROWS_AS((void)tape.log(x), NumericError);
}

TEST_CASE("replay reproduces recorded values bitwise") {
  RngStream rng(7);
  Tape<double> tape;
  auto w = tape.leaf(random_tensor(rng, Shape{3, 4}), "w");
  auto x = tape.constant(random_tensor(rng, Shape{4}));
  auto h = tape.tanh(tape.matmul(w, x));
  auto loss = tape.sum(tape.sigmoid(h));
  (void)loss;
  auto values = tape.replay();
  for (Tape<double>::Id id = 0; id < static_cast<Tape<double>::Id>(values.size()); ++id) {
    const auto& live = tape.value(id);
    const auto& replayed = values[static_cast<std::size_t>(id)];
    REQUIRE(live.shape() == replayed.shape());
    for (std::int64_t i = 0; i < live.numel(); ++i) CHECK(live[i] == replayed[i]);
  }
}

TEST_CASE("finite differences recover simple analytic derivatives") {
  // f(x) = x^2 at x = 3.
  std::map<std::string, Tensor<double>> point{{"x", vec({3.0})}};
  auto square = [](const std::map<std::string, Tensor<double>>& p) {
    const double x = p.at("x")[0];
    return x * x;
  };
  auto g = finite_difference_gradient<double>(square, point, 1e-5);
  CHECK(std::abs(g.at("x")[0] - 6.0) < 1e-9);

  // f(x) = sum(x): gradient is all ones.
  std::map<std::string, Tensor<double>> point2{{"x", vec({0.4, -2.0, 11.0})}};
  auto total = [](const std::map<std::string, Tensor<double>>& p) {
    double acc = 0;
    for (std::int64_t i = 0; i < p.at("x").numel(); ++i) acc += p.at("x")[i];
    return acc;
  };
  auto g2 = finite_difference_gradient<double>(total, point2, 1e-5);
  for (int i = 0; i < 3; ++i) CHECK(g2.at("x")[i] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("random two-layer perceptron gradients match finite differences") {
  RngStream rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    std::map<std::string, Tensor<double>> leaves{
        {"w1", random_tensor(rng, Shape{4, 5})}, {"b1", random_tensor(rng, Shape{4})},
        {"w2", random_tensor(rng, Shape{1, 4})}, {"b2", random_tensor(rng, Shape{1})},
        {"x", random_tensor(rng, Shape{5})},
    };
    check_gradients(leaves, [](Tape<double>& tape, std::map<std::string, Tape<double>::Id>& ids) {
      auto h = tape.tanh(tape.add(tape.matmul(ids["w1"], ids["x"]), ids["b1"]));
      auto out = tape.add(tape.matmul(ids["w2"], h), ids["b2"]);
      return tape.sum(tape.sigmoid(out));
    });
  }
}

// Every primitive, randomized: compose the primitive with an inner-product
// readout so all output components influence the scalar loss, then compare
// against central differences (100 trials each, as the contract demands).
TEST_CASE("primitive backward rules match finite differences over 100 trials") {
  RngStream rng(2024);

  auto readout = [](Tape<double>& tape, Tape<double>::Id y, const Tensor<double>& probe) {
    return tape.sum(tape.hadamard(y, tape.constant(probe)));
  };

  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t n = 2 + static_cast<std::int64_t>(rng.uniform_int(4));
    const std::int64_t m = 2 + static_cast<std::int64_t>(rng.uniform_int(4));
    const Tensor<double> probe_n = random_tensor(rng, Shape{n});
    const Tensor<double> probe_m = random_tensor(rng, Shape{m});

    {
      // matmul, matrix times vector.
      std::map<std::string, Tensor<double>> leaves{{"w", random_tensor(rng, Shape{m, n})},
                                                   {"x", random_tensor(rng, Shape{n})}};
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return readout(t, t.matmul(ids["w"], ids["x"]), probe_m);
      });
    }
    {
      // matmul, matrix times matrix.
      std::map<std::string, Tensor<double>> leaves{{"a", random_tensor(rng, Shape{m, n})},
                                                   {"b", random_tensor(rng, Shape{n, m})}};
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return t.sum(t.matmul(ids["a"], ids["b"]));
      });
    }
    {
      std::map<std::string, Tensor<double>> leaves{{"a", random_tensor(rng, Shape{n})},
                                                   {"b", random_tensor(rng, Shape{n})}};
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return readout(t, t.add(ids["a"], ids["b"]), probe_n);
      });
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return readout(t, t.hadamard(ids["a"], ids["b"]), probe_n);
      });
    }
    {
      std::map<std::string, Tensor<double>> leaves{{"a", random_tensor(rng, Shape{n})}};
      const double s = rng.uniform(-2.0, 2.0);
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return readout(t, t.scale(ids["a"], s), probe_n);
      });
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return readout(t, t.sigmoid(ids["a"]), probe_n);
      });
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return readout(t, t.tanh(ids["a"]), probe_n);
      });
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return readout(t, t.softmax(ids["a"]), probe_n);
      });
      check_gradients(leaves,
                      [&](Tape<double>& t, auto& ids) { return t.sum(ids["a"]); });
      check_gradients(leaves,
                      [&](Tape<double>& t, auto& ids) { return t.mean(ids["a"]); });
    }
    {
      // log needs positive inputs, comfortably away from zero.
      std::map<std::string, Tensor<double>> leaves{{"a", random_tensor(rng, Shape{n}, 0.2, 3.0)}};
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return readout(t, t.log(ids["a"]), probe_n);
      });
    }
    {
      // concat + slice together, sliced range inside the joined vector.
      std::map<std::string, Tensor<double>> leaves{{"a", random_tensor(rng, Shape{n})},
                                                   {"b", random_tensor(rng, Shape{m})}};
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        auto joined = t.concat({ids["a"], ids["b"]});
        return t.sum(t.slice(joined, 1, n + m - 1));
      });
    }
    {
      // clamp: keep every coordinate away from the kink at the bounds.
      Tensor<double> a = random_tensor(rng, Shape{n}, -1.0, 1.0);
      for (std::int64_t i = 0; i < n; ++i) {
        if (std::abs(std::abs(a[i]) - 0.5) < 1e-3) a[i] = 0.0;
      }
      std::map<std::string, Tensor<double>> leaves{{"a", a}};
      check_gradients(leaves, [&](Tape<double>& t, auto& ids) {
        return readout(t, t.clamp(ids["a"], -0.5, 0.5), probe_n);
      });
    }
  }
}
