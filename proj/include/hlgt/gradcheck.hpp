#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hlgt/tensor.hpp"

namespace hlgt {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
  int64_t elements = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = true;

  std::string to_string() const;
};

// Compares tape gradients of a scalar-valued function against central finite
// differences (f(t+h) - f(t-h)) / 2h, element by element, in the scalar type
// of the parameters (use double: the oracle needs the headroom).
//
// `f` must be deterministic; this is verified by evaluating it twice at the
// unperturbed point and requiring bitwise equality. `f` is called with a tape
// active exactly once to collect analytic gradients, then with no tape for
// every probe.
GradCheckReport grad_check(const std::function<TensorD()>& f,
                           const std::vector<TensorD>& params, double h,
                           double tol);

}  // namespace hlgt
