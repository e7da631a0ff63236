#pragma once

#include <array>
#include <memory>
#include <string_view>

#include "prefirl/env.hpp"

namespace prefirl {

/// 1-D car on a terrain with two Gaussian hills.
///
///   state (x, v), action a in [-1, 1]
///   u     = clip(clip(a) + noise * xi, -1, 1),   xi ~ N(0, 1)
///   v'    = clip(v + dt * (force * u - damping * v - gravity * y'(x)), -v_max, v_max)
///   x'    = x + dt * v'; at the walls |x'| = x_max the car stops (v' = 0)
///   y(x)  = h_L(x) + h_R(x),  h_k(x) = exp(-(x - c_k)^2 / (2 width^2))
///
/// Basic cost: -max(h_L(x), h_R(x)). Target cost: -h_target(x).
class TwoPeaks final : public Environment {
 public:
  struct Params {
    int horizon = 100;
    double gamma = 0.99;
    double dt = 0.1;
    double force = 2.0;
    double damping = 1.0;
    double gravity = 0.5;
    double peak_center = 1.0;  // peaks at -peak_center and +peak_center
    double peak_width = 0.35;
    double x_max = 2.0;
    double v_max = 1.5;
    double start_halfwidth = 0.3;  // x0 ~ U(-start_halfwidth, start_halfwidth), v0 = 0
    double action_noise = 0.04;    // 0.02 of the action range
    int target_peak = +1;          // +1 right peak, -1 left peak
  };

  TwoPeaks() : TwoPeaks(Params{}) {}
  explicit TwoPeaks(Params p);

  std::string id() const override { return "two_peaks"; }
  std::size_t state_dim() const override { return 2; }
  const ActionSpace& action_space() const override { return actions_; }
  int horizon() const override { return p_.horizon; }
  double gamma() const override { return p_.gamma; }

  State initial_state(Rng& rng) const override;
  State transition(const State& s, const Action& a, Rng& rng) const override;
  bool contains(const State& s) const override;

  double basic_cost(const State& s, const Action& a) const override;
  double target_cost(const State& s, const Action& a) const override;

  std::vector<double> observe(const State& s, int step) const override;
  std::size_t observation_dim() const override { return 3; }

  /// x -> -x, v -> -v, a -> -a.
  std::optional<Reflection> reflection() const override { return Reflection{{-1.0, -1.0, 1.0}, {-1.0}}; }

  /// Deterministic part of the dynamics, given the executed action u.
  State step_executed(const State& s, double u) const;
  double hill(double x, int side) const;
  double slope(double x) const;
  const Params& params() const { return p_; }

 private:
  Params p_;
  ActionSpace actions_;
};

/// Planar point mass with velocity actions.
///
///   state p = (x, y), action a in [-1, 1]^2
///   u  = clip(clip(a) + noise * xi, -1, 1) per component
///   p' = clip(p + dt * u, -bound, bound)
///
/// Basic cost: -max(k(|p - t1|), k(|p - t2|)); target cost: -k(|p - m|) with m
/// the midpoint of the two targets and k(d) = exp(-d^2 / (2 width^2)).
class PointReacher final : public Environment {
 public:
  struct Params {
    int horizon = 50;
    double gamma = 0.99;
    double dt = 0.1;
    double bound = 2.0;
    std::array<double, 2> target1{-1.0, 1.0};
    std::array<double, 2> target2{1.0, 1.0};
    double width = 0.5;
    double start_halfwidth = 0.5;  // x0 ~ U(-start_halfwidth, start_halfwidth), y0 = 0
    double action_noise = 0.04;
  };

  PointReacher() : PointReacher(Params{}) {}
  explicit PointReacher(Params p);

  std::string id() const override { return "point_reacher"; }
  std::size_t state_dim() const override { return 2; }
  const ActionSpace& action_space() const override { return actions_; }
  int horizon() const override { return p_.horizon; }
  double gamma() const override { return p_.gamma; }

  State initial_state(Rng& rng) const override;
  State transition(const State& s, const Action& a, Rng& rng) const override;
  bool contains(const State& s) const override;

  double basic_cost(const State& s, const Action& a) const override;
  double target_cost(const State& s, const Action& a) const override;

  std::vector<double> observe(const State& s, int step) const override;
  std::size_t observation_dim() const override { return 3; }

  /// x -> -x with y kept; swaps the two targets.
  std::optional<Reflection> reflection() const override { return Reflection{{-1.0, 1.0, 1.0}, {-1.0, 1.0}}; }

  State step_executed(const State& s, std::array<double, 2> u) const;
  double proximity(const State& s, std::array<double, 2> point) const;
  std::array<double, 2> midpoint() const;
  const Params& params() const { return p_; }

 private:
  Params p_;
  ActionSpace actions_;
};

/// "two_peaks", "point_reacher" or any tabular fixture name.
std::unique_ptr<Environment> make_environment(std::string_view name);
std::vector<std::string> environment_names();

}  // namespace prefirl
