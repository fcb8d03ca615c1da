#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "eegdann/tensor.hpp"

namespace eegdann::ad {

struct GradCheckOptions {
    /// Output channels (conv1d), output features (linear), hidden size (lstm_cell).
    std::size_t out_features = 3;
    double step = 1e-4;
    std::uint64_t seed = 1234;
    /// Inputs of piecewise-linear primitives stay this far from their kinks.
    double kink_margin = 0.05;
};

struct GradCheckResult {
    bool passed = false;
    double max_rel_error = 0.0;
    std::string diagnostics;  // worst element: input index, flat index, analytic, numeric
};

/// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps
/// near-zero entries from amplifying round-off.
inline constexpr double kGradCheckFloor = 1e-3;

/// Compares the analytic backward of a registered primitive against central
/// finite differences on seeded random inputs. Never throws for a
/// registered primitive; unknown ids return a failed result.
GradCheckResult grad_check(std::string_view primitive, const Shape& input_shape, double tolerance,
                           const GradCheckOptions& options = {});

std::vector<std::string> registered_primitives();

}  // namespace eegdann::ad
