#pragma once

#include <cstdint>
#include <initializer_list>
#include <new>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace anchorforge::diff {

using Shape = std::vector<std::int64_t>;

/// 64-byte aligned allocation. Every value and gradient buffer starts on the
/// same alignment, so vectorized kernels take identical code paths (and
/// summation orders) from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised by any op whose inputs violate its contract or whose output is
/// not finite. The message always starts with the op name.
class DiffError : public std::runtime_error {
 public:
  DiffError(std::string_view op, const std::string& what);
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Dense row-major array. `T` is float for training and double for
/// gradient checks.
template <typename T>
struct Array {
  Shape shape;
  Buffer<T> data;

  Array() = default;
  explicit Array(Shape s, T fill = T{0});
  Array(Shape s, const std::vector<T>& values);
  Array(Shape s, Buffer<T> values);
  Array(Shape s, std::initializer_list<T> values) : Array(std::move(s), Buffer<T>(values)) {}

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  template <typename U>
  Array<U> cast() const {
    Array<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

/// Throws DiffError naming `op` if any value is NaN or infinite.
template <typename T>
void check_finite(const Array<T>& a, std::string_view op);

extern template struct Array<float>;
extern template struct Array<double>;

}  // namespace anchorforge::diff
