#pragma once

#include <span>
#include <vector>

#include "eegdann/tensor.hpp"

// Differentiable primitives over Tensor. Binary element-wise ops require
// identical shapes; there is no implicit broadcasting.
namespace eegdann::ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

/// [M, K] x [K, N] -> [M, N]
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
/// Natural log; inputs must be strictly positive.
Tensor log(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// Flat range [begin, end) as a 1-D tensor.
Tensor slice(const Tensor& x, std::size_t begin, std::size_t end);
/// Flat concatenation into a 1-D tensor.
Tensor concat(std::span<const Tensor> parts);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
/// [T, A] and [T, B] -> [T, A + B]
Tensor concat_columns(const Tensor& a, const Tensor& b);
/// Index along the leading axis: x[i, ...].
Tensor row(const Tensor& x, std::size_t i);
/// Gathers rows along the leading axis: out[j, ...] = x[indices[j], ...].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);

/// Writable gradient buffer of an input seen from inside a backward closure.
std::span<double> grad_of(const Tensor& t);

}  // namespace eegdann::ad
