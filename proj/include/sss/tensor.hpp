#pragma once

// Dense row-major tensors of small rank plus the Parameter/AdamState pair
// used by the optimizer. Templated on the scalar type: training runs in
// float, gradient-check tests instantiate double.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sss {

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_size(shape_))
      throw std::invalid_argument("Tensor: data length != product of dims");
  }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // (c, y, x) indexing for rank-3 tensors
  T& at3(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
  }
  const T& at3(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
  }

  // (o, c, ky, kx) indexing for rank-4 tensors
  T& at4(int o, int c, int ky, int kx) {
    return data_[((static_cast<std::size_t>(o) * dim(1) + c) * dim(2) + ky) * dim(3) + kx];
  }
  const T& at4(int o, int c, int ky, int kx) const {
    return data_[((static_cast<std::size_t>(o) * dim(1) + c) * dim(2) + ky) * dim(3) + kx];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  static std::size_t checked_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dim");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

template <typename T>
struct AdamState {
  Tensor<T> m, v;
  std::int64_t t = 0;

  AdamState() = default;
  explicit AdamState(const std::vector<int>& shape) : m(shape), v(shape) {}
};

// One Adam update; bias-corrected moments, grad is zeroed afterwards.
template <typename T>
void adam_step(Parameter<T>& param, AdamState<T>& state, T lr, T beta1 = T(0.9),
               T beta2 = T(0.999), T eps = T(1e-8)) {
  if (!param.value.same_shape(param.grad) || !param.value.same_shape(state.m) ||
      !param.value.same_shape(state.v))
    throw std::invalid_argument("adam_step: shape mismatch");
  state.t += 1;
  const T c1 = T(1) - static_cast<T>(std::pow(beta1, static_cast<double>(state.t)));
  const T c2 = T(1) - static_cast<T>(std::pow(beta2, static_cast<double>(state.t)));
  T* w = param.value.data();
  T* g = param.grad.data();
  T* m = state.m.data();
  T* v = state.v.data();
  const std::int64_t n = param.value.size();
  for (std::int64_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    g[i] = T(0);
  }
}

}  // namespace sss
