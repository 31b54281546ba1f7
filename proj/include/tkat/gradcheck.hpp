#pragma once

#include <string>
#include <vector>

namespace tkat {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Finite-difference verification of every layer's backward pass at toy
// dimensions, plus the full model end to end. Layer checks must come in
// under 1e-5, the end-to-end check under 1e-4 (float64, central
// differences at the given eps).
std::vector<GradCheckResult> run_gradient_suite(double eps = 1e-6);

}  // namespace tkat
