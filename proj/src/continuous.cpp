#include "prefirl/continuous.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prefirl/tabular.hpp"

namespace prefirl {

namespace {

double executed(double a, double noise, Rng& rng) {
  const double u = std::clamp(a, -1.0, 1.0) + noise * standard_normal(rng);
  return std::clamp(u, -1.0, 1.0);
}

}  // namespace

TwoPeaks::TwoPeaks(Params p) : p_(p), actions_(ActionSpace::box({-1.0}, {1.0})) {
  if (p_.horizon < 1) throw std::invalid_argument("TwoPeaks: horizon must be positive");
  if (p_.target_peak != 1 && p_.target_peak != -1) throw std::invalid_argument("TwoPeaks: target_peak must be +1 or -1");
}

State TwoPeaks::initial_state(Rng& rng) const {
  return {p_.start_halfwidth * (2.0 * uniform01(rng) - 1.0), 0.0};
}

double TwoPeaks::hill(double x, int side) const {
  const double d = x - side * p_.peak_center;
  return std::exp(-d * d / (2.0 * p_.peak_width * p_.peak_width));
}

double TwoPeaks::slope(double x) const {
  const double w2 = p_.peak_width * p_.peak_width;
  return -(x - p_.peak_center) / w2 * hill(x, +1) - (x + p_.peak_center) / w2 * hill(x, -1);
}

State TwoPeaks::step_executed(const State& s, double u) const {
  double v = s[1] + p_.dt * (p_.force * u - p_.damping * s[1] - p_.gravity * slope(s[0]));
  v = std::clamp(v, -p_.v_max, p_.v_max);
  double x = s[0] + p_.dt * v;
  if (x > p_.x_max || x < -p_.x_max) {
    x = std::clamp(x, -p_.x_max, p_.x_max);
    v = 0.0;
  }
  return {x, v};
}

State TwoPeaks::transition(const State& s, const Action& a, Rng& rng) const {
  return step_executed(s, executed(a.values()[0], p_.action_noise, rng));
}

bool TwoPeaks::contains(const State& s) const {
  return s.size() == 2 && std::abs(s[0]) <= p_.x_max && std::abs(s[1]) <= p_.v_max;
}

double TwoPeaks::basic_cost(const State& s, const Action&) const {
  return -std::max(hill(s[0], -1), hill(s[0], +1));
}

double TwoPeaks::target_cost(const State& s, const Action&) const { return -hill(s[0], p_.target_peak); }

std::vector<double> TwoPeaks::observe(const State& s, int step) const {
  return {s[0] / p_.x_max, s[1] / p_.v_max, static_cast<double>(step) / p_.horizon};
}

PointReacher::PointReacher(Params p) : p_(p), actions_(ActionSpace::box({-1.0, -1.0}, {1.0, 1.0})) {
  if (p_.horizon < 1) throw std::invalid_argument("PointReacher: horizon must be positive");
}

State PointReacher::initial_state(Rng& rng) const {
  return {p_.start_halfwidth * (2.0 * uniform01(rng) - 1.0), 0.0};
}

State PointReacher::step_executed(const State& s, std::array<double, 2> u) const {
  return {std::clamp(s[0] + p_.dt * u[0], -p_.bound, p_.bound), std::clamp(s[1] + p_.dt * u[1], -p_.bound, p_.bound)};
}

State PointReacher::transition(const State& s, const Action& a, Rng& rng) const {
  const std::vector<double>& v = a.values();
  const double ux = executed(v[0], p_.action_noise, rng);
  const double uy = executed(v[1], p_.action_noise, rng);
  return step_executed(s, {ux, uy});
}

bool PointReacher::contains(const State& s) const {
  return s.size() == 2 && std::abs(s[0]) <= p_.bound && std::abs(s[1]) <= p_.bound;
}

double PointReacher::proximity(const State& s, std::array<double, 2> point) const {
  const double dx = s[0] - point[0], dy = s[1] - point[1];
  return std::exp(-(dx * dx + dy * dy) / (2.0 * p_.width * p_.width));
}

std::array<double, 2> PointReacher::midpoint() const {
  return {0.5 * (p_.target1[0] + p_.target2[0]), 0.5 * (p_.target1[1] + p_.target2[1])};
}

double PointReacher::basic_cost(const State& s, const Action&) const {
  return -std::max(proximity(s, p_.target1), proximity(s, p_.target2));
}

double PointReacher::target_cost(const State& s, const Action&) const { return -proximity(s, midpoint()); }

std::vector<double> PointReacher::observe(const State& s, int step) const {
  return {s[0] / p_.bound, s[1] / p_.bound, static_cast<double>(step) / p_.horizon};
}

std::unique_ptr<Environment> make_environment(std::string_view name) {
  if (name == "two_peaks") return std::make_unique<TwoPeaks>();
  if (name == "point_reacher") return std::make_unique<PointReacher>();
  return make_tabular_fixture(name);
}

std::vector<std::string> environment_names() {
  std::vector<std::string> names = tabular_fixture_names();
  names.insert(names.begin(), {"two_peaks", "point_reacher"});
  return names;
}

}  // namespace prefirl
