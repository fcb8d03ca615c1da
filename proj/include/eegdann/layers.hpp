#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eegdann/tensor.hpp"

namespace eegdann::nn {

using ad::Shape;
using ad::Tensor;
using Rng = std::mt19937_64;

enum class Mode { train, eval };

/// Ordered (name, tensor) pairs; the order defines the serialization layout.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr double kLeakySlope = 0.1;

// ---------------------------------------------------------------------------
// Functional primitives
// ---------------------------------------------------------------------------

/// x[N, in] * weight[out, in]^T + bias[out] -> [N, out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Cross-correlation. x[N, C_in, L] (or [C_in, L]), weight[C_out, C_in, K], bias[C_out].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Window maxima along the last axis; a trailing partial window is dropped.
/// Ties route the gradient to the earliest index.
Tensor max_pool1d(const Tensor& x, std::size_t kernel = 2, std::size_t stride = 2);

/// Mean over the last axis: [N, C, L] -> [N, C], [C, L] -> [C].
Tensor global_avg_pool(const Tensor& x);

struct BatchNormOptions {
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Per-channel normalization of x[N, C, L] or x[N, C]. In training mode the
/// batch statistics over (N, L) are used and the running statistics updated
/// in place; in eval mode only the running statistics are read.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, BatchNormOptions options, Mode mode);

/// x for x >= 0, slope * x otherwise (derivative 1 at the kink).
Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);

/// Max-shifted softmax over the last axis.
Tensor softmax(const Tensor& x);

/// Identity forward; backward multiplies the upstream gradient by -lambda.
Tensor grad_reversal(const Tensor& x, double lambda);

/// One LSTM step with gate order (input, forget, cell, output).
/// x[I], h[H], c[H], w_ih[4H, I], w_hh[4H, H], bias[4H] -> [2H] = (h', c').
Tensor lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& w_ih,
                 const Tensor& w_hh, const Tensor& bias);

// ---------------------------------------------------------------------------
// Parameterized layers
// ---------------------------------------------------------------------------

struct Linear {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng);
    Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
    void append_params(NamedTensors& out, const std::string& prefix) const;
};

struct Conv1d {
    Tensor weight;  // [out, in, kernel]
    Tensor bias;    // [out]
    std::size_t stride = 1;
    std::size_t padding = 1;

    Conv1d() = default;
    Conv1d(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng, std::size_t stride = 1,
           std::size_t padding = 1);
    Tensor forward(const Tensor& x) const { return conv1d(x, weight, bias, stride, padding); }
    void append_params(NamedTensors& out, const std::string& prefix) const;
};

struct BatchNorm1d {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    BatchNormOptions options;

    BatchNorm1d() = default;
    explicit BatchNorm1d(std::size_t channels, BatchNormOptions options = {});
    Tensor forward(const Tensor& x, Mode mode);
    void append_params(NamedTensors& out, const std::string& prefix) const;
    void append_buffers(NamedTensors& out, const std::string& prefix) const;
};

struct LstmDirection {
    Tensor w_ih;  // [4H, I]
    Tensor w_hh;  // [4H, H]
    Tensor bias;  // [4H]

    LstmDirection() = default;
    LstmDirection(std::size_t input, std::size_t hidden, Rng& rng);
    std::size_t hidden() const { return w_hh.extent(1); }
    /// Runs over seq[T, I] (in reverse time when `reverse`), zero initial
    /// state, returning hidden states [T, H] in original time order.
    Tensor run(const Tensor& seq, bool reverse) const;
    void append_params(NamedTensors& out, const std::string& prefix) const;
};

/// Stacked bidirectional LSTM; each layer's per-timestep output is the
/// concatenation (forward, backward) and feeds the next layer.
struct BiLstm {
    std::vector<std::array<LstmDirection, 2>> layers;

    BiLstm() = default;
    BiLstm(std::size_t input, std::size_t hidden, std::size_t num_layers, Rng& rng);
    Tensor forward(const Tensor& seq) const;
    std::size_t output_size() const { return 2 * layers.front()[0].hidden(); }
    void append_params(NamedTensors& out, const std::string& prefix) const;
};

/// Uniform(-bound, bound) values for a new parameter tensor.
Tensor uniform_param(Shape shape, double bound, Rng& rng);

}  // namespace eegdann::nn
