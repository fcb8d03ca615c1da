#include "eegdann/adam.hpp"

#include <cmath>
#include <string>

#include "eegdann/error.hpp"

namespace eegdann::ad {

AdamState AdamState::for_params(std::span<const Tensor> params) {
    AdamState state;
    for (const auto& p : params) {
        state.first_moment.emplace_back(p.size(), 0.0);
        state.second_moment.emplace_back(p.size(), 0.0);
    }
    return state;
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
    require(lr > 0.0, "adam_step: learning rate must be positive");
    require(params.size() == state.first_moment.size(),
            "adam_step: state was built for " + std::to_string(state.first_moment.size()) +
                " parameters, got " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i].has_grad(), "adam_step: parameter " + std::to_string(i) +
                                          " has no gradient");
        require(params[i].size() == state.first_moment[i].size(),
                "adam_step: parameter " + std::to_string(i) + " changed size");
    }
    ++state.step;
    const auto t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].values_mut();
        auto grad = params[i].grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = grad[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            values[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

void zero_grads(std::span<Tensor> params) {
    for (auto& p : params) {
        p.grad_mut();
        p.zero_grad();
    }
}

}  // namespace eegdann::ad
