#include "eegdann/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "eegdann/error.hpp"
#include "eegdann/ops.hpp"

namespace eegdann::train {

using ad::grad_of;
using ad::Node;

ClassWeights class_weights(std::span<const int> labels) {
    std::size_t positives = 0;
    for (int y : labels) {
        require(y == 0 || y == 1, "class_weights: labels must be 0 or 1");
        positives += static_cast<std::size_t>(y);
    }
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw DataError("class weights undefined: label set has " + std::to_string(positives) +
                        " positives and " + std::to_string(negatives) + " negatives");
    }
    const auto n = static_cast<double>(labels.size());
    return {n / (2.0 * static_cast<double>(negatives)), n / (2.0 * static_cast<double>(positives))};
}

Tensor label_loss(const Tensor& probs, std::span<const int> labels, const ClassWeights& weights) {
    require(probs.dim() == 1 && probs.size() == labels.size(),
            "label_loss: " + std::to_string(probs.size()) + " probabilities for " +
                std::to_string(labels.size()) + " labels");
    const auto pv = probs.values();
    const double inv_n = 1.0 / static_cast<double>(pv.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double p = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
        const double w = weights[labels[i]];
        total -= w * (labels[i] == 1 ? std::log(p) : std::log(1.0 - p));
    }
    std::vector<int> y(labels.begin(), labels.end());
    return ad::record("label_loss", {1}, {total * inv_n}, {probs},
                      [y = std::move(y), weights, inv_n](const Node& node,
                                                         std::span<const double> g) {
                          const auto pv = node.inputs[0].values();
                          auto gp = grad_of(node.inputs[0]);
                          for (std::size_t i = 0; i < pv.size(); ++i) {
                              const double p = pv[i];
                              if (p < kProbClamp || p > 1.0 - kProbClamp) {
                                  continue;  // clamped: locally constant
                              }
                              const double w = weights[y[i]];
                              const double d = y[i] == 1 ? -1.0 / p : 1.0 / (1.0 - p);
                              gp[i] += g[0] * inv_n * w * d;
                          }
                      });
}

Tensor domain_loss(const Tensor& probs, std::span<const int> domains) {
    require(probs.dim() == 2 && probs.extent(0) == domains.size(),
            "domain_loss: probabilities must be [N, K] with N = " +
                std::to_string(domains.size()));
    const std::size_t k = probs.extent(1);
    const auto pv = probs.values();
    const double inv_n = 1.0 / static_cast<double>(domains.size());
    double total = 0.0;
    for (std::size_t i = 0; i < domains.size(); ++i) {
        require(domains[i] >= 0 && static_cast<std::size_t>(domains[i]) < k,
                "domain_loss: domain index out of range");
        const double p = std::clamp(pv[i * k + static_cast<std::size_t>(domains[i])], kProbClamp,
                                    1.0 - kProbClamp);
        total -= std::log(p);
    }
    std::vector<int> d(domains.begin(), domains.end());
    return ad::record("domain_loss", {1}, {total * inv_n}, {probs},
                      [d = std::move(d), k, inv_n](const Node& node, std::span<const double> g) {
                          const auto pv = node.inputs[0].values();
                          auto gp = grad_of(node.inputs[0]);
                          for (std::size_t i = 0; i < d.size(); ++i) {
                              const std::size_t idx = i * k + static_cast<std::size_t>(d[i]);
                              const double p = pv[idx];
                              if (p < kProbClamp || p > 1.0 - kProbClamp) {
                                  continue;
                              }
                              gp[idx] += -g[0] * inv_n / p;
                          }
                      });
}

double lambda_schedule(double progress) {
    require(progress >= 0.0 && progress <= 1.0,
            "lambda_schedule: progress " + std::to_string(progress) + " outside [0, 1]");
    return 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
}

}  // namespace eegdann::train
