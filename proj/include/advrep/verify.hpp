#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace advrep {

// Double-precision numeric verification: central-difference gradient checks
// over every op and the assembled encoder/decoder/head graphs, plus the
// conv / conv-transpose adjoint identity.
struct VerifyReport {
  double max_rel_err = 0.0;     // worst gradient-check relative error
  size_t gradcheck_trials = 0;  // randomized trials run
  double adjoint_worst = 0.0;   // worst adjoint relative mismatch
  size_t adjoint_cases = 0;
  bool pass = false;
  std::vector<std::string> lines;  // per-section summaries
};

VerifyReport run_numeric_verification(uint64_t seed, size_t trials,
                                      size_t adjoint_cases = 50);

}  // namespace advrep
