#include "rawpc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rawpc/error.hpp"

namespace rawpc {

namespace {
thread_local Tape* g_current_tape = nullptr;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t;
  t.d_ = std::make_shared<Storage>();
  t.d_->value.assign(shape_numel(shape), value);
  t.d_->shape = std::move(shape);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  Tensor t;
  t.d_ = std::make_shared<Storage>();
  t.d_->shape = std::move(shape);
  t.d_->value = std::move(values);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  if (!d_) throw ShapeError("undefined tensor");
  return d_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return d_ ? d_->value.size() : 0; }

std::span<double> Tensor::data() { return d_->value; }
std::span<const double> Tensor::data() const { return d_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return d_->value[0];
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }
void Tensor::set_requires_grad(bool on) { d_->requires_grad = on; }

std::span<double> Tensor::grad() { return d_->grad; }
std::span<const double> Tensor::grad() const { return d_->grad; }
bool Tensor::has_grad() const { return d_ && !d_->grad.empty(); }

std::span<double> Tensor::ensure_grad() const {
  if (d_->grad.empty()) d_->grad.assign(d_->value.size(), 0.0);
  return d_->grad;
}

void Tensor::zero_grad() {
  if (d_) d_->grad.clear();
}

Tensor Tensor::clone() const {
  Tensor t = from(shape(), d_->value, d_->requires_grad);
  t.d_->grad = d_->grad;
  return t;
}

void Tensor::check_finite(const std::string& what) const {
  for (double v : data()) {
    if (!std::isfinite(v)) throw NumericError(what + ": non-finite value");
  }
}

void Tape::backward(Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) throw ShapeError("backward: loss is not on the tape");
  auto g = loss.ensure_grad();
  g[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

Tape* Tape::current() { return g_current_tape; }

Tape* active_tape(std::initializer_list<const Tensor*> inputs) {
  if (!g_current_tape) return nullptr;
  for (const Tensor* t : inputs) {
    if (t && t->requires_grad()) return g_current_tape;
  }
  return nullptr;
}

Tape* active_tape(std::span<const Tensor> inputs) {
  if (!g_current_tape) return nullptr;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return g_current_tape;
  }
  return nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
Tape::Scope::~Scope() { g_current_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(g_current_tape) { g_current_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_current_tape = previous_; }

}  // namespace rawpc
