#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cgnn/errors.hpp"

namespace cgnn {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Shapes are explicit everywhere; there is no
// broadcasting beyond scalar scaling in the op layer. All stored values
// must be finite; non-finite data is an error, never a silent state.
template <class Real>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), Real(0));
  }

  Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
    ensure_finite("tensor construction");
  }

  static Tensor scalar(Real v) { return Tensor(Shape{1}, std::vector<Real>{v}); }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, Real v) {
    Tensor t(std::move(shape));
    for (Real& x : t.data_) x = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t dim(std::size_t i) const { return shape_[i]; }

  std::vector<Real>& data() { return data_; }
  const std::vector<Real>& data() const { return data_; }

  Real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const Real& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // row-major 2-d access
  Real& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
  const Real& at(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }

  bool requires_grad = false;

  void ensure_finite(const char* context) const {
    for (const Real& x : data_) {
      if (!std::isfinite(static_cast<double>(x))) {
        throw NumericError(std::string("non-finite value in ") + context);
      }
    }
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (std::int64_t d : shape_) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<Real> data_;
};

}  // namespace cgnn
