#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "prefirl/nn.hpp"
#include "prefirl/rng.hpp"

using namespace prefirl;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * (2.0 * uniform01(rng) - 1.0);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Largest relative error between the analytic gradient and central differences.
double gradient_error(ParamFunction f, std::span<const double> x, std::span<const double> seed) {
  const std::vector<double> analytic = f.gradient(seed, x);
  std::vector<double> p(f.parameters().begin(), f.parameters().end());
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    f.set_parameters(p);
    const double up = dot(seed, f.forward(x));
    p[i] = keep - h;
    f.set_parameters(p);
    const double down = dot(seed, f.forward(x));
    p[i] = keep;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(numeric - analytic[i]) / std::max(1.0, std::abs(numeric) + std::abs(analytic[i])));
  }
  f.set_parameters(p);
  return worst;
}

}  // namespace

TEST_CASE("zero parameters give zero output") {
  ParamFunction f({3, 4, 2}, Activation::kTanh, 1);
  std::vector<double> zero(f.parameter_count(), 0.0);
  f.set_parameters(zero);
  const std::vector<double> x{0.3, -2.0, 5.0};
  for (double y : f.forward(x)) CHECK(y == 0.0);
}

TEST_CASE("identity linear layer") {
  ParamFunction f({2, 2}, Activation::kTanh, 1);
  const std::vector<double> identity{1, 0, 0, 1, 0, 0};
  f.set_parameters(identity);
  const std::vector<double> x{1.0, 2.0};
  CHECK(f.forward(x) == x);
}

TEST_CASE("2-2-1 tanh network against a hand evaluation") {
  ParamFunction f({2, 2, 1}, Activation::kTanh, 1);
  // W1 = [[0.5, -1], [2, 0.25]], b1 = [0.1, -0.3], W2 = [1.5, -0.7], b2 = 0.2
  const std::vector<double> p{0.5, -1.0, 2.0, 0.25, 0.1, -0.3, 1.5, -0.7, 0.2};
  f.set_parameters(p);
  const std::vector<double> x{0.4, -0.6};
  const double h0 = std::tanh(0.5 * 0.4 + -1.0 * -0.6 + 0.1);
  const double h1 = std::tanh(2.0 * 0.4 + 0.25 * -0.6 - 0.3);
  CHECK(f.forward(x)[0] == doctest::Approx(1.5 * h0 - 0.7 * h1 + 0.2).epsilon(1e-15));
}

TEST_CASE("backward base cases") {
  ParamFunction f({2, 1}, Activation::kTanh, 3);
  const std::vector<double> x{0.7, -1.3};
  const std::vector<double> one{1.0}, zero{0.0};
  const auto g = f.gradient(one, x);
  CHECK(g[0] == x[0]);
  CHECK(g[1] == x[1]);
  CHECK(g[2] == 1.0);
  ParamFunction deep({3, 4, 2}, Activation::kSoftplus, 2);
  const std::vector<double> z2{0.0, 0.0}, x3{1, 2, 3};
  for (double v : deep.gradient(z2, x3)) CHECK(v == 0.0);
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(17);
  const std::vector<std::vector<std::size_t>> shapes{{3, 4, 2}, {3, 32, 32, 2}, {5, 1}, {4, 8, 1}, {20, 1}};
  for (Activation act : {Activation::kTanh, Activation::kRelu, Activation::kSoftplus}) {
    for (const auto& shape : shapes) {
      for (int draw = 0; draw < 20; ++draw) {
        ParamFunction f(shape, act, rng());
        f.set_parameters(random_vector(f.parameter_count(), rng));
        const auto x = random_vector(shape.front(), rng, 2.0);
        const auto seed = random_vector(shape.back(), rng);
        INFO(to_string(act), " draw ", draw);
        CHECK(gradient_error(f, x, seed) <= 1e-4);
      }
    }
  }
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    OptimizerState opt(2, AdamConfig{});
    std::vector<double> p{1.5, -2.0};
    const std::vector<double> g{0.0, 0.0};
    opt.step(p, g);
    CHECK(p[0] == 1.5);
    CHECK(p[1] == -2.0);
  }
  SUBCASE("quadratic minimizer") {
    AdamConfig cfg;
    cfg.step_size = 0.05;
    OptimizerState opt(1, cfg);
    std::vector<double> p{0.0};
    for (int k = 0; k < 500; ++k) {
      const std::vector<double> g{2.0 * (p[0] - 3.0)};
      opt.step(p, g);
    }
    CHECK(std::abs(p[0] - 3.0) <= 1e-3);
  }
  SUBCASE("non-finite gradient is refused") {
    OptimizerState opt(2, AdamConfig{});
    std::vector<double> p{1.0, 2.0};
    const std::vector<double> g{0.5, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(opt.step(p, g), std::domain_error);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 2.0);
    CHECK(opt.steps() == 0);
  }
}

TEST_CASE("checkpoints round-trip exactly") {
  ParamFunction f({3, 5, 2}, Activation::kSoftplus, 9);
  const std::vector<double> extra{-0.5, 0.25};
  std::stringstream io;
  write_checkpoint(io, f, {{"note", "x"}}, extra);
  const Checkpoint c = read_checkpoint(io);
  CHECK(c.header.at("note") == "x");
  CHECK(c.extra == extra);
  CHECK(c.function.layer_sizes() == f.layer_sizes());
  CHECK(c.function.activations() == f.activations());
  const std::vector<double> x{0.1, 0.2, 0.3};
  CHECK(c.function.forward(x) == f.forward(x));

  std::stringstream full;
  write_checkpoint(full, f);
  std::stringstream cut(full.str().substr(0, full.str().size() - 3));
  CHECK_THROWS(read_checkpoint(cut));
}
