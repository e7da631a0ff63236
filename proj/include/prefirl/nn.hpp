#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace prefirl {

enum class Activation { kTanh, kRelu, kSoftplus };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Layered affine maps with an elementwise activation after every hidden
/// layer and a linear output layer. Parameters are one flat vector; layer l
/// stores its weights row-major [n_out][n_in] followed by its n_out biases.
class ParamFunction {
 public:
  /// Intermediate values of one evaluation, reused by `backward`.
  struct Tape {
    std::vector<std::vector<double>> values;  // values[0] = input, values[l+1] = layer l output
  };

  ParamFunction() = default;
  /// Weights ~ U(-1/sqrt(n_in), 1/sqrt(n_in)), biases 0, drawn from `seed`.
  ParamFunction(std::vector<std::size_t> layer_sizes, Activation hidden, std::uint64_t seed);
  ParamFunction(std::vector<std::size_t> layer_sizes, std::vector<Activation> hidden, std::uint64_t seed);

  static std::size_t count_parameters(std::span<const std::size_t> layer_sizes);

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  const std::vector<Activation>& activations() const { return activations_; }
  std::uint64_t seed() const { return seed_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  void set_parameters(std::span<const double> p);
  /// Multiplies the output layer's weights and biases by `factor`.
  void scale_output_layer(double factor);

  std::vector<double> forward(std::span<const double> x) const;
  /// Evaluates into `tape` and returns a view of the output held by it.
  std::span<const double> forward(std::span<const double> x, Tape& tape) const;
  /// Adds d<seed, f(x)>/d params into `grad` for the evaluation recorded in `tape`.
  void backward(const Tape& tape, std::span<const double> seed, std::span<double> grad) const;
  /// Gradient of <seed, f(x)> with respect to the parameters.
  std::vector<double> gradient(std::span<const double> seed, std::span<const double> x) const;

 private:
  void check_input(std::span<const double> x) const;

  std::vector<std::size_t> sizes_;
  std::vector<Activation> activations_;
  std::vector<double> params_;
  std::uint64_t seed_ = 0;
};

struct AdamConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment first-order optimizer state for one parameter vector.
class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(std::size_t n, AdamConfig cfg);

  /// Updates `params` in place. A non-finite gradient throws and leaves
  /// both the parameters and the moments untouched.
  void step(std::span<double> params, std::span<const double> grad);

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::uint64_t steps() const { return t_; }
  std::size_t size() const { return m_.size(); }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

/// Checkpoint: one line of JSON (layer_sizes, activation, seed, n_params,
/// n_extra plus caller fields) terminated by '\n', then n_params + n_extra
/// little-endian IEEE-754 doubles.
struct Checkpoint {
  ParamFunction function;
  nlohmann::json header;
  std::vector<double> extra;
};

void write_checkpoint(std::ostream& out, const ParamFunction& f, const nlohmann::json& fields = nlohmann::json::object(),
                      std::span<const double> extra = {});
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const ParamFunction& f,
                     const nlohmann::json& fields = nlohmann::json::object(), std::span<const double> extra = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace prefirl
