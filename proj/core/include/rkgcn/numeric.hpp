#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rkgcn/common.hpp"

namespace rkgcn {

/// Named dense tensor with a same-shape gradient accumulator.
/// Storage is row-major; a "row" is everything below the leading axis.
template <typename Real>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<Real> value;
  std::vector<Real> grad;

  std::size_t size() const { return value.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape.front(); }
  std::size_t row_size() const { return shape.empty() ? 1 : size() / std::max<std::size_t>(1, shape.front()); }

  std::span<Real> row(std::size_t i) { return {value.data() + i * row_size(), row_size()}; }
  std::span<const Real> row(std::size_t i) const { return {value.data() + i * row_size(), row_size()}; }
  std::span<Real> grad_row(std::size_t i) { return {grad.data() + i * row_size(), row_size()}; }
};

template <typename Real>
class ParamStore {
 public:
  Tensor<Real>& add(std::string name, std::vector<std::size_t> shape) {
    if (find(name)) throw Error("duplicate tensor name: " + name);
    std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    tensors_.push_back(Tensor<Real>{std::move(name), std::move(shape), std::vector<Real>(n, Real(0)),
                                    std::vector<Real>(n, Real(0))});
    return tensors_.back();
  }

  Tensor<Real>* find(std::string_view name) {
    for (auto& t : tensors_)
      if (t.name == name) return &t;
    return nullptr;
  }
  const Tensor<Real>* find(std::string_view name) const {
    for (const auto& t : tensors_)
      if (t.name == name) return &t;
    return nullptr;
  }
  Tensor<Real>& at(std::string_view name) {
    if (auto* t = find(name)) return *t;
    throw Error("no tensor named " + std::string(name));
  }
  const Tensor<Real>& at(std::string_view name) const {
    if (const auto* t = find(name)) return *t;
    throw Error("no tensor named " + std::string(name));
  }

  std::deque<Tensor<Real>>& tensors() { return tensors_; }
  const std::deque<Tensor<Real>>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  void zero_grad() {
    for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), Real(0));
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

 private:
  std::deque<Tensor<Real>> tensors_;
};

/// Max-shifted softmax. `out` may alias `in`.
template <typename Real>
void softmax(std::span<const Real> in, std::span<Real> out) {
  if (in.empty()) throw Error("softmax of an empty list");
  Real peak = *std::max_element(in.begin(), in.end());
  Real total = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= total;
}

std::vector<double> softmax(std::span<const double> scores);

template <typename Real>
Real sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  Real e = std::exp(x);
  return e / (Real(1) + e);
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out);

template <typename Real>
void xavier_uniform(std::span<Real> values, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  std::uniform_real_distribution<double> dist(-xavier_bound(fan_in, fan_out), xavier_bound(fan_in, fan_out));
  for (auto& v : values) v = static_cast<Real>(dist(rng));
}

template <typename Real>
void check_finite_gradients(const ParamStore<Real>& params) {
  for (const auto& t : params.tensors())
    for (auto g : t.grad)
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in tensor '" + t.name + "'");
}

struct AdamOptions {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Gradients are zeroed after each step.
template <typename Real>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(ParamStore<Real>& params) {
    check_finite_gradients(params);
    if (first_.size() != params.size()) {
      first_.clear();
      second_.clear();
      for (const auto& t : params.tensors()) {
        first_.emplace_back(t.size(), Real(0));
        second_.emplace_back(t.size(), Real(0));
      }
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    const auto b1 = static_cast<Real>(options_.beta1);
    const auto b2 = static_cast<Real>(options_.beta2);
    const auto step_size = static_cast<Real>(options_.lr / c1);
    const auto c2r = static_cast<Real>(c2);
    const auto eps = static_cast<Real>(options_.eps);
    std::size_t k = 0;
    for (auto& t : params.tensors()) {
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < t.size(); ++i) {
        Real g = t.grad[i];
        m[i] = b1 * m[i] + (Real(1) - b1) * g;
        v[i] = b2 * v[i] + (Real(1) - b2) * g * g;
        t.value[i] -= step_size * m[i] / (std::sqrt(v[i] / c2r) + eps);
      }
      std::fill(t.grad.begin(), t.grad.end(), Real(0));
      ++k;
    }
  }

  std::size_t steps() const { return steps_; }

 private:
  AdamOptions options_;
  std::vector<std::vector<Real>> first_;
  std::vector<std::vector<Real>> second_;
  std::size_t steps_ = 0;
};

template <typename Real>
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}

  void step(ParamStore<Real>& params) {
    check_finite_gradients(params);
    const auto lr = static_cast<Real>(lr_);
    for (auto& t : params.tensors()) {
      for (std::size_t i = 0; i < t.size(); ++i) t.value[i] -= lr * t.grad[i];
      std::fill(t.grad.begin(), t.grad.end(), Real(0));
    }
  }

 private:
  double lr_;
};

struct FiniteDiffReport {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  struct PerTensor {
    std::string name;
    double max_rel_error = 0;
    std::size_t coordinates = 0;
  };
  std::vector<PerTensor> per_tensor;

  double tensor_error(std::string_view name) const;
};

struct FiniteDiffOptions {
  double h = 1e-5;
  /// Coordinates with a nonzero analytic gradient checked per tensor.
  std::size_t active_per_tensor = 48;
  /// Additional uniformly drawn coordinates per tensor.
  std::size_t random_per_tensor = 8;
  /// Relative error denominator is max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 7;
};

/// Compares the analytic gradients already stored in `params` against
/// central differences of `loss`. `loss` must read the current values and
/// must not touch the gradient buffers.
FiniteDiffReport finite_diff_check(const std::function<double()>& loss, ParamStore<double>& params,
                                   FiniteDiffOptions options = {});

/// Binary snapshot:
///   "RKGCNPRM" | u32 version | u32 scalar bytes | u64 tensor count
///   per tensor: u32 name length | name | u32 rank | u64 dims[rank] | values
/// Values are row-major in native (little-endian) byte order. The file is
/// written to a temporary sibling and renamed into place.
template <typename Real>
void save_params(const ParamStore<Real>& params, const std::filesystem::path& path);

template <typename Real>
ParamStore<Real> load_params(const std::filesystem::path& path);

template <typename To, typename From>
ParamStore<To> convert_params(const ParamStore<From>& from) {
  ParamStore<To> out;
  for (const auto& t : from.tensors()) {
    auto& dst = out.add(t.name, t.shape);
    std::transform(t.value.begin(), t.value.end(), dst.value.begin(), [](From v) { return static_cast<To>(v); });
  }
  return out;
}

}  // namespace rkgcn
