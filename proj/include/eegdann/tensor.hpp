#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eegdann::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;
struct Node;

namespace detail {
struct TensorData {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;
};
}  // namespace detail

/// Dense row-major tensor of 64-bit reals. Copies share storage; use
/// `detach()` for an independent copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor filled(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return d_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t size() const;

    std::span<const double> values() const;
    /// Direct write access. Only valid for leaves (parameters, inputs).
    std::span<double> values_mut();
    double item() const;
    double at(std::size_t flat_index) const { return values()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    /// Gradient buffer, allocated (zero-filled) on first access.
    std::span<double> grad_mut();
    void zero_grad();
    /// Releases the gradient buffer.
    void clear_grad();

    bool is_leaf() const;
    const Node* node() const;

    /// Independent copy of the values with no graph history.
    Tensor detach() const;

    bool same(const Tensor& other) const noexcept { return d_ == other.d_; }

private:
    friend Tensor record(std::string_view, Shape, std::vector<double>, std::vector<Tensor>,
                         std::function<void(const Node&, std::span<const double>)>);
    explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
    detail::TensorData& data() const;

    std::shared_ptr<detail::TensorData> d_;
};

using BackwardFn = std::function<void(const Node&, std::span<const double> grad_out)>;

/// One executed primitive. `backward` accumulates into the gradients of the
/// inputs that require them.
struct Node {
    std::string_view op;
    std::vector<Tensor> inputs;
    BackwardFn backward;
};

/// Creates the output of a primitive. A graph node is attached only when
/// gradient recording is enabled and some input requires a gradient.
Tensor record(std::string_view op, Shape shape, std::vector<double> values,
              std::vector<Tensor> inputs, BackwardFn backward);

/// Ordered primitives reachable from a root, inputs before consumers.
struct ComputationRecord {
    std::vector<const Node*> ops;
};

ComputationRecord trace(const Tensor& root);

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable tensor that requires one; intermediate buffers are released.
void backward(const Tensor& loss);

bool grad_enabled() noexcept;

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace eegdann::ad
