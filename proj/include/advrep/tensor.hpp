#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "advrep/common.hpp"

namespace advrep {

// Dense row-major tensor with a value buffer and a lazily allocated gradient
// buffer. TensorT itself is a cheap shared handle: copies alias the same
// storage, which is what the tape closures rely on.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<size_t> shape, bool requires_grad = false)
      : d_(std::make_shared<Data>()) {
    d_->shape = std::move(shape);
    d_->value.assign(count(d_->shape), T(0));
    d_->requires_grad = requires_grad;
  }

  static TensorT scalar(T v, bool requires_grad = false) {
    TensorT t(std::vector<size_t>{1}, requires_grad);
    t.data()[0] = v;
    return t;
  }

  static TensorT from(std::vector<size_t> shape, std::vector<T> values,
                      bool requires_grad = false) {
    TensorT t;
    t.d_ = std::make_shared<Data>();
    ADVREP_REQUIRE(values.size() == count(shape), ShapeError,
                   "value count ", values.size(), " does not match shape");
    t.d_->shape = std::move(shape);
    t.d_->value = std::move(values);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  const std::vector<size_t>& shape() const { return d_->shape; }
  size_t dim(size_t i) const {
    ADVREP_CHECK(i < d_->shape.size(), "dim index out of range");
    return d_->shape[i];
  }
  size_t ndim() const { return d_->shape.size(); }
  size_t numel() const { return d_->value.size(); }

  T* data() { return d_->value.data(); }
  const T* data() const { return d_->value.data(); }
  std::vector<T>& values() { return d_->value; }
  const std::vector<T>& values() const { return d_->value; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool b) { d_->requires_grad = b; }

  bool has_grad() const { return !d_->grad.empty(); }

  // Allocates (zeroed) on first touch.
  T* grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), T(0));
    return d_->grad.data();
  }
  std::vector<T>& grad_values() {
    grad();
    return d_->grad;
  }

  void zero_grad() {
    if (!d_->grad.empty()) d_->grad.assign(d_->value.size(), T(0));
  }

  // Same underlying storage test, used by parameter bookkeeping.
  bool same_storage(const TensorT& other) const { return d_ == other.d_; }

  static size_t count(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t s : shape) n *= s;
    return n;
  }

 private:
  struct Data {
    std::vector<size_t> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

// Reverse-mode tape: ops append closures during the forward pass, backward()
// seeds the loss gradient and replays them last-to-first.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  void backward(TensorT<T> loss) {
    ADVREP_CHECK(loss.numel() == 1, "backward target must be a scalar");
    ADVREP_CHECK(loss.requires_grad(), "backward target has no grad path");
    loss.grad()[0] += T(1);
    for (size_t i = nodes_.size(); i > 0; --i) nodes_[i - 1]();
  }

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

using Tensor = TensorT<float>;

}  // namespace advrep
