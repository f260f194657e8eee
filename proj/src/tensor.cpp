#include "hlgt/tensor.hpp"

#include <cmath>

namespace hlgt {

template <class S>
void check_finite(const TensorT<S>& t, const char* op) {
  for (S v : t.values()) {
    if (!std::isfinite(v)) {
      std::string label = t.name().empty() ? "<unnamed>" : t.name();
      throw NumericError(std::string(op) + ": non-finite value in tensor '" +
                         label + "' (" + std::to_string(t.rows()) + "x" +
                         std::to_string(t.cols()) + ")");
    }
  }
}

template void check_finite<float>(const TensorT<float>&, const char*);
template void check_finite<double>(const TensorT<double>&, const char*);

}  // namespace hlgt
