#include "eegdann/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "eegdann/layers.hpp"
#include "eegdann/losses.hpp"
#include "eegdann/ops.hpp"

namespace eegdann::ad {

namespace {

using Rng = std::mt19937_64;
using Forward = std::function<Tensor(const std::vector<Tensor>&)>;

struct Case {
    std::vector<Tensor> inputs;
    Forward forward;
    double numeric_factor = 1.0;  // GRL: backward is -lambda times the forward derivative
};

using Builder = std::function<Case(const Shape&, const GradCheckOptions&, Rng&)>;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(numel(shape));
    for (double& x : v) {
        x = dist(rng);
    }
    return Tensor::from(std::move(shape), std::move(v), true);
}

// Magnitudes in [margin, 1] with random sign.
Tensor away_from_zero(Shape shape, double margin, Rng& rng) {
    std::uniform_real_distribution<double> mag(margin, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(numel(shape));
    for (double& x : v) {
        x = sign(rng) ? mag(rng) : -mag(rng);
    }
    return Tensor::from(std::move(shape), std::move(v), true);
}

// Distinct values spaced 2 * margin apart, shuffled.
Tensor distinct_values(Shape shape, double margin, Rng& rng) {
    std::vector<double> v(numel(shape));
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = (static_cast<double>(i) - static_cast<double>(v.size()) / 2.0) * 2.0 * margin;
    }
    std::shuffle(v.begin(), v.end(), rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Case unary_case(const Shape& s, Rng& rng, Tensor (*op)(const Tensor&)) {
    return {{random_tensor(s, rng)}, [op](const auto& in) { return op(in[0]); }};
}

Case binary_case(const Shape& s, Rng& rng, Tensor (*op)(const Tensor&, const Tensor&)) {
    return {{random_tensor(s, rng), random_tensor(s, rng)},
            [op](const auto& in) { return op(in[0], in[1]); }};
}

const std::map<std::string, Builder, std::less<>>& registry() {
    static const std::map<std::string, Builder, std::less<>> table = {
        {"add", [](const Shape& s, const auto&, Rng& r) { return binary_case(s, r, add); }},
        {"sub", [](const Shape& s, const auto&, Rng& r) { return binary_case(s, r, sub); }},
        {"mul", [](const Shape& s, const auto&, Rng& r) { return binary_case(s, r, mul); }},
        {"dot", [](const Shape& s, const auto&, Rng& r) { return binary_case(s, r, dot); }},
        {"sum", [](const Shape& s, const auto&, Rng& r) { return unary_case(s, r, sum); }},
        {"mean", [](const Shape& s, const auto&, Rng& r) { return unary_case(s, r, mean); }},
        {"tanh", [](const Shape& s, const auto&, Rng& r) { return unary_case(s, r, ad::tanh); }},
        {"sigmoid",
         [](const Shape& s, const auto&, Rng& r) { return unary_case(s, r, ad::sigmoid); }},
        {"exp", [](const Shape& s, const auto&, Rng& r) { return unary_case(s, r, ad::exp); }},
        {"log",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r, 0.5, 2.0)},
                         [](const auto& in) { return ad::log(in[0]); }};
         }},
        {"scale",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r)},
                         [](const auto& in) { return scale(in[0], -1.7); }};
         }},
        {"reshape",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r)},
                         [](const auto& in) { return reshape(in[0], {in[0].size()}); }};
         }},
        {"slice",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r)}, [](const auto& in) {
                             const std::size_t n = in[0].size();
                             return slice(in[0], n / 3, n);
                         }};
         }},
        {"concat",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r), random_tensor(s, r)},
                         [](const auto& in) { return concat(in); }};
         }},
        {"stack",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r), random_tensor(s, r)},
                         [](const auto& in) { return stack(in); }};
         }},
        {"row",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r)},
                         [](const auto& in) { return row(in[0], in[0].extent(0) - 1); }};
         }},
        {"gather_rows",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r)}, [](const auto& in) {
                             const std::size_t last = in[0].extent(0) - 1;
                             const std::vector<std::size_t> idx{last, 0, last};
                             return gather_rows(in[0], idx);
                         }};
         }},
        {"concat_columns",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r), random_tensor(s, r)},
                         [](const auto& in) { return concat_columns(in[0], in[1]); }};
         }},
        {"matmul",
         [](const Shape& s, const GradCheckOptions& o, Rng& r) {
             return Case{{random_tensor(s, r), random_tensor({s.back(), o.out_features}, r)},
                         [](const auto& in) { return matmul(in[0], in[1]); }};
         }},
        {"linear",
         [](const Shape& s, const GradCheckOptions& o, Rng& r) {
             return Case{{random_tensor(s, r), random_tensor({o.out_features, s.back()}, r),
                          random_tensor({o.out_features}, r)},
                         [](const auto& in) { return nn::linear(in[0], in[1], in[2]); }};
         }},
        {"conv1d",
         [](const Shape& s, const GradCheckOptions& o, Rng& r) {
             const std::size_t in_c = s.size() == 3 ? s[1] : s[0];
             return Case{{random_tensor(s, r), random_tensor({o.out_features, in_c, 3}, r),
                          random_tensor({o.out_features}, r)},
                         [](const auto& in) { return nn::conv1d(in[0], in[1], in[2], 1, 1); }};
         }},
        {"batch_norm",
         [](const Shape& s, const auto&, Rng& r) {
             const std::size_t ch = s[1];
             auto rm = std::make_shared<Tensor>(Tensor::zeros({ch}));
             auto rv = std::make_shared<Tensor>(Tensor::filled({ch}, 1.0));
             return Case{{random_tensor(s, r), random_tensor({ch}, r, 0.5, 1.5),
                          random_tensor({ch}, r)},
                         [rm, rv](const auto& in) {
                             return nn::batch_norm(in[0], in[1], in[2], *rm, *rv, {},
                                                   nn::Mode::train);
                         }};
         }},
        {"batch_norm_eval",
         [](const Shape& s, const auto&, Rng& r) {
             const std::size_t ch = s[1];
             auto rm = std::make_shared<Tensor>(random_tensor({ch}, r).detach());
             auto rv = std::make_shared<Tensor>(random_tensor({ch}, r, 0.5, 2.0).detach());
             return Case{{random_tensor(s, r), random_tensor({ch}, r, 0.5, 1.5),
                          random_tensor({ch}, r)},
                         [rm, rv](const auto& in) {
                             return nn::batch_norm(in[0], in[1], in[2], *rm, *rv, {},
                                                   nn::Mode::eval);
                         }};
         }},
        {"leaky_relu",
         [](const Shape& s, const GradCheckOptions& o, Rng& r) {
             return Case{{away_from_zero(s, o.kink_margin, r)},
                         [](const auto& in) { return nn::leaky_relu(in[0]); }};
         }},
        {"max_pool1d",
         [](const Shape& s, const GradCheckOptions& o, Rng& r) {
             return Case{{distinct_values(s, o.kink_margin, r)},
                         [](const auto& in) { return nn::max_pool1d(in[0], 2, 2); }};
         }},
        {"global_avg_pool",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r)},
                         [](const auto& in) { return nn::global_avg_pool(in[0]); }};
         }},
        {"softmax",
         [](const Shape& s, const auto&, Rng& r) {
             return Case{{random_tensor(s, r, -2.0, 2.0)},
                         [](const auto& in) { return nn::softmax(in[0]); }};
         }},
        {"grad_reversal",
         [](const Shape& s, const auto&, Rng& r) {
             constexpr double lambda = 0.7;
             return Case{{random_tensor(s, r)},
                         [](const auto& in) { return nn::grad_reversal(in[0], lambda); },
                         -lambda};
         }},
        {"lstm_cell",
         [](const Shape& s, const GradCheckOptions& o, Rng& r) {
             const std::size_t in = s[0];
             const std::size_t h = o.out_features;
             return Case{{random_tensor({in}, r), random_tensor({h}, r), random_tensor({h}, r),
                          random_tensor({4 * h, in}, r), random_tensor({4 * h, h}, r),
                          random_tensor({4 * h}, r)},
                         [](const auto& v) {
                             return nn::lstm_cell(v[0], v[1], v[2], v[3], v[4], v[5]);
                         }};
         }},
        {"label_loss",
         [](const Shape& s, const auto&, Rng& r) {
             std::vector<int> labels(numel(s));
             for (std::size_t i = 0; i < labels.size(); ++i) {
                 labels[i] = static_cast<int>(i % 3 == 0);
             }
             return Case{{random_tensor(s, r, 0.05, 0.95)}, [labels](const auto& in) {
                             return train::label_loss(in[0], labels, {0.625, 2.5});
                         }};
         }},
        {"domain_loss",
         [](const Shape& s, const auto&, Rng& r) {
             std::vector<int> domains(s[0]);
             for (std::size_t i = 0; i < domains.size(); ++i) {
                 domains[i] = static_cast<int>(i % s[1]);
             }
             return Case{{random_tensor(s, r, 0.05, 0.95)}, [domains](const auto& in) {
                             return train::domain_loss(in[0], domains);
                         }};
         }},
    };
    return table;
}

double weighted_output(const Tensor& out, const std::vector<double>& weights) {
    auto v = out.values();
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        total += weights[i] * v[i];
    }
    return total;
}

GradCheckResult run_check(const Builder& build, const Shape& input_shape, double tolerance,
                          const GradCheckOptions& options);

}  // namespace

std::vector<std::string> registered_primitives() {
    std::vector<std::string> names;
    for (const auto& [name, _] : registry()) {
        names.push_back(name);
    }
    return names;
}

GradCheckResult grad_check(std::string_view primitive, const Shape& input_shape, double tolerance,
                           const GradCheckOptions& options) {
    GradCheckResult result;
    const auto& table = registry();
    auto it = table.find(primitive);
    if (it == table.end()) {
        result.diagnostics = "unknown primitive '" + std::string(primitive) + "'";
        return result;
    }
    if (tolerance <= 0.0) {
        result.diagnostics = "tolerance must be positive";
        return result;
    }
    try {
        return run_check(it->second, input_shape, tolerance, options);
    } catch (const std::exception& e) {
        result.diagnostics = std::string("primitive rejected the inputs: ") + e.what();
        return result;
    }
}

namespace {

GradCheckResult run_check(const Builder& build, const Shape& input_shape, double tolerance,
                          const GradCheckOptions& options) {
    GradCheckResult result;
    Rng rng(options.seed);
    Case c = build(input_shape, options, rng);

    // Fixed random projection turns any output into a scalar loss.
    std::vector<double> projection;
    {
        NoGradGuard guard;
        const Tensor probe = c.forward(c.inputs);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        projection.resize(probe.size());
        for (double& w : projection) {
            w = dist(rng);
        }
    }

    const Tensor out = c.forward(c.inputs);
    const Tensor loss = dot(out, Tensor::from(out.shape(), projection));
    backward(loss);

    std::ostringstream worst;
    double max_err = 0.0;
    for (std::size_t k = 0; k < c.inputs.size(); ++k) {
        Tensor& input = c.inputs[k];
        std::vector<double> analytic(input.size(), 0.0);
        if (input.has_grad()) {
            std::copy(input.grad().begin(), input.grad().end(), analytic.begin());
        }
        auto values = input.values_mut();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            double plus = 0.0;
            double minus = 0.0;
            {
                NoGradGuard guard;
                values[i] = saved + options.step;
                plus = weighted_output(c.forward(c.inputs), projection);
                values[i] = saved - options.step;
                minus = weighted_output(c.forward(c.inputs), projection);
            }
            values[i] = saved;
            const double numeric = c.numeric_factor * (plus - minus) / (2.0 * options.step);
            const double denom =
                std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
            const double err = std::abs(analytic[i] - numeric) / denom;
            if (!std::isfinite(err) || err > max_err) {
                max_err = std::isfinite(err) ? err : HUGE_VAL;
                worst.str("");
                worst << "input " << k << " element " << i << ": analytic " << analytic[i]
                      << " numeric " << numeric;
            }
        }
    }
    result.max_rel_error = max_err;
    result.passed = max_err < tolerance;
    result.diagnostics = worst.str();
    return result;
}

}  // namespace

}  // namespace eegdann::ad
