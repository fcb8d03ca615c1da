#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eegdann/tensor.hpp"

namespace eegdann::ad {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;

    /// Zeroed accumulators shaped like `params`.
    static AdamState for_params(std::span<const Tensor> params);
};

/// Bias-corrected Adam update applied in place. Every parameter must carry a
/// gradient buffer.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

void zero_grads(std::span<Tensor> params);

}  // namespace eegdann::ad
