#pragma once

#include <cstddef>
#include <deque>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace latentdr {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned allocation. Vectorized kernels choose their loop
/// peeling from the buffer address; a fixed alignment keeps results
/// independent of where a buffer landed.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient accumulator.
///
/// The gradient buffer exists iff `requires_grad()` is true and always has the
/// same shape as the values. Rank-0 values are represented with shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);
  static Tensor scalar(double value);

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  /// Row count of a 2-D tensor.
  [[nodiscard]] std::size_t rows() const;
  /// Column count of a 2-D tensor.
  [[nodiscard]] std::size_t cols() const;

  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] std::span<double> values() noexcept { return values_; }
  [[nodiscard]] const Buffer& data() const noexcept { return values_; }
  [[nodiscard]] Buffer& data() noexcept { return values_; }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& at(std::size_t r, std::size_t c);
  [[nodiscard]] double at(std::size_t r, std::size_t c) const;
  /// Value of a single-element tensor.
  [[nodiscard]] double item() const;

  [[nodiscard]] std::span<const double> row(std::size_t r) const;
  [[nodiscard]] std::span<double> row(std::size_t r);

  [[nodiscard]] bool requires_grad() const noexcept { return requires_grad_; }
  /// Enabling allocates a zeroed gradient; disabling drops it.
  void set_requires_grad(bool on);
  [[nodiscard]] bool has_grad() const noexcept { return requires_grad_; }
  [[nodiscard]] std::span<const double> grad() const noexcept { return grad_; }
  [[nodiscard]] std::span<double> grad() noexcept { return grad_; }
  void zero_grad() noexcept;

  /// True iff every value (and gradient, when present) is finite.
  [[nodiscard]] bool all_finite() const noexcept;

  /// Copy of the values without gradient state.
  [[nodiscard]] Tensor detached() const;

 private:
  Shape shape_;
  Buffer values_;
  bool requires_grad_ = false;
  Buffer grad_;
};

/// Named trainable tensor. Always carries a gradient buffer.
struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Owning, insertion-ordered collection of uniquely named parameters.
///
/// References returned by `add` stay valid for the registry's lifetime,
/// including across moves of the registry itself.
class ParameterRegistry {
 public:
  ParameterRegistry() = default;
  ParameterRegistry(const ParameterRegistry&) = delete;
  ParameterRegistry& operator=(const ParameterRegistry&) = delete;
  ParameterRegistry(ParameterRegistry&&) noexcept = default;
  ParameterRegistry& operator=(ParameterRegistry&&) noexcept = default;

  /// Throws ConfigError if `name` is already present.
  Parameter& add(std::string name, Tensor value);

  [[nodiscard]] bool contains(const std::string& name) const;
  Parameter& get(const std::string& name);
  [[nodiscard]] const Parameter& get(const std::string& name) const;

  [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
  [[nodiscard]] std::size_t total_elements() const noexcept;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  [[nodiscard]] auto begin() const noexcept { return params_.begin(); }
  [[nodiscard]] auto end() const noexcept { return params_.end(); }

  void zero_grad() noexcept;

  /// Value snapshot in registry order.
  [[nodiscard]] std::vector<std::vector<double>> snapshot() const;
  /// Restores a snapshot taken from a registry with identical layout.
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace latentdr
