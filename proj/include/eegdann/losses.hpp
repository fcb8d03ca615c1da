#pragma once

#include <span>

#include "eegdann/tensor.hpp"

namespace eegdann::train {

using ad::Tensor;

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

/// Inverse-frequency class weights; each class contributes N/2 in total.
struct ClassWeights {
    double w0 = 1.0;
    double w1 = 1.0;

    double operator[](int label) const { return label == 1 ? w1 : w0; }
};

/// Throws DataError when either class is absent.
ClassWeights class_weights(std::span<const int> labels);

/// Mean class-weighted binary cross-entropy over probs[N].
Tensor label_loss(const Tensor& probs, std::span<const int> labels, const ClassWeights& weights);

/// Mean negative log-probability of the true domain; probs[N, K], domains in [0, K).
Tensor domain_loss(const Tensor& probs, std::span<const int> domains);

/// Adversarial weight ramp 2 / (1 + exp(-10 p)) - 1 for progress p in [0, 1].
double lambda_schedule(double progress);

}  // namespace eegdann::train
