#include "diffcore/array.hpp"

#include <cmath>
#include <sstream>

namespace anchorforge::diff {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw DiffError("shape", "negative extent in " + shape_str(shape));
    n *= e;
  }
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

DiffError::DiffError(std::string_view op, const std::string& what)
    : std::runtime_error(std::string(op) + ": " + what), op_(op) {}

template <typename T>
Array<T>::Array(Shape s, T fill) : shape(std::move(s)), data(static_cast<std::size_t>(numel(shape)), fill) {}

template <typename T>
Array<T>::Array(Shape s, const std::vector<T>& values) : Array(std::move(s), Buffer<T>(values.begin(), values.end())) {}

template <typename T>
Array<T>::Array(Shape s, Buffer<T> values) : shape(std::move(s)), data(std::move(values)) {
  if (numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DiffError("array", "shape " + shape_str(shape) + " does not match " +
                                 std::to_string(data.size()) + " values");
  }
}

template <typename T>
void check_finite(const Array<T>& a, std::string_view op) {
  for (const T v : a.data) {
    if (!std::isfinite(v)) throw DiffError(op, "produced a non-finite value");
  }
}

template struct Array<float>;
template struct Array<double>;
template void check_finite(const Array<float>&, std::string_view);
template void check_finite(const Array<double>&, std::string_view);

}  // namespace anchorforge::diff
