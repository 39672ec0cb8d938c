#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hcmgan {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array of doubles with an optional gradient slot.
///
/// A Tensor is a cheap handle: copies alias the same node. `detached()`
/// returns a handle that reads the same value storage but never receives
/// gradients, which is how parameter gradients are masked without copying.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient on first use.
  std::span<double> mutable_grad() const;
  void accumulate_grad(std::span<const double> delta) const;
  void clear_grad() const;

  Tensor detached() const;
  Tensor clone() const;
  bool shares_storage(const Tensor& other) const;
  const void* storage_id() const;

  bool all_finite() const;

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of differentiable operations.
///
/// Each recorded entry propagates its output gradient into its inputs.
/// `backward` seeds the scalar loss with 1, replays the entries in reverse
/// order exactly once, and clears the tape.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void record(BackwardFn fn);
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<BackwardFn> entries_;
};

}  // namespace hcmgan
