#pragma once

#include <string>

#include "hlgt/gradcheck.hpp"

namespace hlgt {

// Named finite-difference suites over double-precision instances:
//   ops      - every primitive on small random tensors
//   blocks   - trm/mha/fusion/ffn blocks
//   encoder  - both modality encoders end to end (toy dims)
//   decoder  - segment-query decoder stage
//   losses   - cycle-consistency + boundary/final losses
//   full     - the whole model loss on the 2x2 toy instance (D=4, M=2)
// `inject_bug` adds a probe with a deliberately wrong gradient rule; the
// report must name it as the failing entry (negative control).
GradCheckReport run_gradcheck_scope(const std::string& scope, double h, double tol,
                                    bool inject_bug = false);

}  // namespace hlgt
