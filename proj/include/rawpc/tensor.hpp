#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rawpc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage, which is how
/// parameters are referenced from modules, optimizers and the tape at once.
/// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double& operator[](std::size_t i) { return data()[i]; }
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  /// Gradient buffer. Empty span when no gradient has been accumulated.
  std::span<double> grad();
  std::span<const double> grad() const;
  bool has_grad() const;
  /// Allocates a zeroed gradient buffer if absent and returns it.
  std::span<double> ensure_grad() const;
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  /// Throws NumericError if any value is NaN or infinite.
  void check_finite(const std::string& what) const;

 private:
  struct Storage {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> d_;
};

/// Define-by-run record of executed primitives.
///
/// Primitives executed while a Tape is current on the calling thread (see
/// Tape::Scope) and that have at least one input requiring a gradient push a
/// backward closure. backward() replays those closures once, in reverse.
/// A tape and the tensors it references belong to one thread at a time.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(BackwardFn fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  /// The tape is cleared afterwards.
  void backward(Tensor& loss);

  /// Tape recording on this thread, or nullptr when gradients are off.
  static Tape* current();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<BackwardFn> entries_;
};

/// Suspends recording on this thread for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

inline void backward(Tensor& loss, Tape& tape) { tape.backward(loss); }

/// The current tape if any input requires a gradient, else nullptr. Primitives
/// call this to decide whether to record and whether their output needs grad.
Tape* active_tape(std::initializer_list<const Tensor*> inputs);
Tape* active_tape(std::span<const Tensor> inputs);

}  // namespace rawpc
