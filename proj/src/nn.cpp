#include "prefirl/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "prefirl/rng.hpp"

namespace prefirl {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSoftplus: return "softplus";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "softplus") return Activation::kSoftplus;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

namespace {

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: return std::tanh(z);
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kSoftplus: return z > 30.0 ? z : std::log1p(std::exp(z));
  }
  return z;
}

// Derivative expressed through the activation's output y.
inline double activate_derivative(Activation a, double y) {
  switch (a) {
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kRelu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::kSoftplus: return -std::expm1(-y);
  }
  return 1.0;
}

}  // namespace

ParamFunction::ParamFunction(std::vector<std::size_t> layer_sizes, Activation hidden, std::uint64_t seed)
    : ParamFunction(layer_sizes, std::vector<Activation>(layer_sizes.size() > 2 ? layer_sizes.size() - 2 : 0, hidden),
                    seed) {}

ParamFunction::ParamFunction(std::vector<std::size_t> layer_sizes, std::vector<Activation> hidden, std::uint64_t seed)
    : sizes_(std::move(layer_sizes)), activations_(std::move(hidden)), seed_(seed) {
  if (sizes_.size() < 2) throw std::invalid_argument("ParamFunction needs at least an input and an output layer");
  if (std::any_of(sizes_.begin(), sizes_.end(), [](std::size_t n) { return n == 0; })) {
    throw std::invalid_argument("ParamFunction layer sizes must be positive");
  }
  if (activations_.size() != sizes_.size() - 2) {
    throw std::invalid_argument("ParamFunction needs one activation per hidden layer");
  }
  params_.assign(count_parameters(sizes_), 0.0);
  Rng rng(seed);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t n_in = sizes_[l], n_out = sizes_[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
    for (std::size_t k = 0; k < n_in * n_out; ++k) params_[offset + k] = bound * (2.0 * uniform01(rng) - 1.0);
    offset += (n_in + 1) * n_out;
  }
}

std::size_t ParamFunction::count_parameters(std::span<const std::size_t> layer_sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
  return n;
}

void ParamFunction::set_parameters(std::span<const double> p) {
  if (p.size() != params_.size()) throw std::invalid_argument("ParamFunction::set_parameters: wrong parameter count");
  std::copy(p.begin(), p.end(), params_.begin());
}

void ParamFunction::scale_output_layer(double factor) {
  const std::size_t n_in = sizes_[sizes_.size() - 2], n_out = sizes_.back();
  const std::size_t begin = params_.size() - (n_in + 1) * n_out;
  for (std::size_t k = begin; k < params_.size(); ++k) params_[k] *= factor;
}

void ParamFunction::check_input(std::span<const double> x) const {
  if (x.size() != sizes_.front()) {
    throw std::invalid_argument("ParamFunction: input has dimension " + std::to_string(x.size()) + ", expected " +
                                std::to_string(sizes_.front()));
  }
}

std::span<const double> ParamFunction::forward(std::span<const double> x, Tape& tape) const {
  check_input(x);
  const std::size_t n_layers = sizes_.size() - 1;
  tape.values.resize(sizes_.size());
  tape.values[0].assign(x.begin(), x.end());
  const double* w = params_.data();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t n_in = sizes_[l], n_out = sizes_[l + 1];
    const std::vector<double>& in = tape.values[l];
    std::vector<double>& out = tape.values[l + 1];
    out.resize(n_out);
    const double* b = w + n_in * n_out;
    for (std::size_t j = 0; j < n_out; ++j) {
      const double* row = w + j * n_in;
      double z = b[j];
      for (std::size_t i = 0; i < n_in; ++i) z += row[i] * in[i];
      out[j] = l + 1 < n_layers ? activate(activations_[l], z) : z;
    }
    w = b + n_out;
  }
  return tape.values.back();
}

std::vector<double> ParamFunction::forward(std::span<const double> x) const {
  Tape tape;
  forward(x, tape);
  return std::move(tape.values.back());
}

void ParamFunction::backward(const Tape& tape, std::span<const double> seed, std::span<double> grad) const {
  if (seed.size() != sizes_.back()) throw std::invalid_argument("ParamFunction::backward: wrong seed dimension");
  if (grad.size() != params_.size()) throw std::invalid_argument("ParamFunction::backward: wrong gradient size");
  const std::size_t n_layers = sizes_.size() - 1;
  thread_local std::vector<double> delta, previous;
  delta.assign(seed.begin(), seed.end());
  std::size_t end = params_.size();
  for (std::size_t l = n_layers; l-- > 0;) {
    const std::size_t n_in = sizes_[l], n_out = sizes_[l + 1];
    const std::size_t w_off = end - (n_in + 1) * n_out;
    const std::size_t b_off = w_off + n_in * n_out;
    if (l + 1 < n_layers) {
      const std::vector<double>& y = tape.values[l + 1];
      for (std::size_t j = 0; j < n_out; ++j) delta[j] *= activate_derivative(activations_[l], y[j]);
    }
    const std::vector<double>& in = tape.values[l];
    for (std::size_t j = 0; j < n_out; ++j) {
      const double d = delta[j];
      if (d == 0.0) continue;
      double* g = grad.data() + w_off + j * n_in;
      for (std::size_t i = 0; i < n_in; ++i) g[i] += d * in[i];
      grad[b_off + j] += d;
    }
    if (l > 0) {
      previous.assign(n_in, 0.0);
      for (std::size_t j = 0; j < n_out; ++j) {
        const double d = delta[j];
        if (d == 0.0) continue;
        const double* row = params_.data() + w_off + j * n_in;
        for (std::size_t i = 0; i < n_in; ++i) previous[i] += row[i] * d;
      }
      delta.swap(previous);
    }
    end = w_off;
  }
}

std::vector<double> ParamFunction::gradient(std::span<const double> seed, std::span<const double> x) const {
  Tape tape;
  forward(x, tape);
  std::vector<double> grad(params_.size(), 0.0);
  backward(tape, seed, grad);
  return grad;
}

OptimizerState::OptimizerState(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

void OptimizerState::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("OptimizerState::step: parameter/gradient size mismatch");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw std::domain_error("OptimizerState::step: non-finite gradient component " + std::to_string(i) + " (" +
                              std::to_string(grad[i]) + ")");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= cfg_.step_size * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

namespace {

void write_le_double(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
  out.write(bytes, 8);
}

double read_le_double(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("checkpoint: truncated parameter data");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamFunction& f, const nlohmann::json& fields,
                      std::span<const double> extra) {
  nlohmann::json header = fields.is_object() ? fields : nlohmann::json::object();
  header["layer_sizes"] = f.layer_sizes();
  std::vector<std::string> acts;
  for (Activation a : f.activations()) acts.push_back(to_string(a));
  header["activation"] = acts;
  header["seed"] = f.seed();
  header["n_params"] = f.parameter_count();
  header["n_extra"] = extra.size();
  out << header.dump() << '\n';
  for (double v : f.parameters()) write_le_double(out, v);
  for (double v : extra) write_le_double(out, v);
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing header");
  Checkpoint ck;
  ck.header = nlohmann::json::parse(line);
  std::vector<Activation> acts;
  for (const auto& name : ck.header.at("activation")) acts.push_back(activation_from_string(name.get<std::string>()));
  ck.function = ParamFunction(ck.header.at("layer_sizes").get<std::vector<std::size_t>>(), acts,
                              ck.header.at("seed").get<std::uint64_t>());
  const std::size_t n = ck.header.at("n_params").get<std::size_t>();
  if (n != ck.function.parameter_count()) throw std::runtime_error("checkpoint: parameter count does not match layers");
  std::vector<double> params(n);
  for (double& v : params) v = read_le_double(in);
  ck.function.set_parameters(params);
  ck.extra.resize(ck.header.at("n_extra").get<std::size_t>());
  for (double& v : ck.extra) v = read_le_double(in);
  return ck;
}

void save_checkpoint(const std::string& path, const ParamFunction& f, const nlohmann::json& fields,
                     std::span<const double> extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, f, fields, extra);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace prefirl
