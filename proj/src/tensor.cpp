#include "hfnrv/tensor.hpp"

#include <sstream>

namespace hfnrv {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

void check_finite_or_throw(bool finite, std::string_view op) {
  if (!finite) throw NumericError("non-finite value produced by " + std::string(op));
}

}  // namespace detail
}  // namespace hfnrv
