#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace befseg::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;  // worst error observed, or the failure reason
};

// Each check recomputes its expectation with an independent oracle written
// against the math, not against the implementation.

// conv2d (random shapes, strides, and the fixed gradient kernels) vs a
// direct nested-loop convolution, 20 cases, tolerance 1e-12
CheckResult check_conv_oracle(std::uint64_t seed);

// constant image -> exactly zero edges; unit steps -> interior magnitude
// 1/sqrt(2) within 1e-12, symmetric across axes
CheckResult check_sobel_analytics();

// finite-difference check of every tensor operation and of the composite
// loss through a small full model, across `num_seeds` seeds, threshold 1e-4
CheckResult check_gradients(std::size_t num_seeds);

// metric report vs per-pixel recounting on 50 random pairs plus the frozen
// 2x2 case; Dice >= IoU classwise
CheckResult check_metric_oracle(std::uint64_t seed);

// gate range/midpoint and bridge endpoint/bound identities
CheckResult check_gate_bridge(std::uint64_t seed);

// zero-weight encoder and decoder blocks are exact identities
CheckResult check_residual_identities(std::uint64_t seed);

// Runs every check; inject_fault corrupts one backward rule first, so a
// healthy harness must come back failing.
std::vector<CheckResult> run_all(bool inject_fault);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace befseg::verify
