#include "hcmgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hcmgan/errors.hpp"

namespace hcmgan {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::TensorNode>();
  node_->shape = std::move(shape);
  node_->data = std::make_shared<std::vector<double>>(std::move(values));
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("axis out of range for " + shape_str(shape()));
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->data->size(); }

std::span<const double> Tensor::values() const { return *node_->data; }

std::span<double> Tensor::mutable_values() { return *node_->data; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
  return (*node_->data)[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return (*node_->data)[row * node_->shape.back() + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() const {
  if (node_->grad.empty()) node_->grad.assign(size(), 0.0);
  return node_->grad;
}

void Tensor::accumulate_grad(std::span<const double> delta) const {
  auto g = mutable_grad();
  if (delta.size() != g.size()) throw ShapeError("gradient length mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void Tensor::clear_grad() const {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

Tensor Tensor::detached() const {
  Tensor out;
  out.node_ = std::make_shared<detail::TensorNode>();
  out.node_->shape = node_->shape;
  out.node_->data = node_->data;
  return out;
}

Tensor Tensor::clone() const { return Tensor(shape(), *node_->data); }

bool Tensor::shares_storage(const Tensor& other) const {
  return node_ && other.node_ && node_->data == other.node_->data;
}

const void* Tensor::storage_id() const { return node_->data.get(); }

bool Tensor::all_finite() const {
  return std::all_of(node_->data->begin(), node_->data->end(),
                     [](double v) { return std::isfinite(v); });
}

void Tape::record(BackwardFn fn) { entries_.push_back(std::move(fn)); }

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that does not require grad");
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

}  // namespace hcmgan
