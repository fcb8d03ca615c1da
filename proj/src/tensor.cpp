#include "eegdann/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>
#include <utility>

#include "eegdann/error.hpp"

namespace eegdann::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

static void check_shape(const Shape& shape) {
    for (auto e : shape) {
        require(e > 0, "tensor extents must be positive, got " + to_string(shape));
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
    check_shape(shape);
    auto d = std::make_shared<detail::TensorData>();
    d->value.assign(numel(shape), value);
    d->shape = std::move(shape);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    require(numel(shape) == values.size(), "value count " + std::to_string(values.size()) +
                                               " does not match shape " + to_string(shape));
    auto d = std::make_shared<detail::TensorData>();
    d->shape = std::move(shape);
    d->value = std::move(values);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

detail::TensorData& Tensor::data() const {
    require(d_ != nullptr, "use of an undefined tensor");
    return *d_;
}

const Shape& Tensor::shape() const { return data().shape; }

std::size_t Tensor::extent(std::size_t axis) const {
    const auto& s = shape();
    require(axis < s.size(), "axis " + std::to_string(axis) + " out of range for " + to_string(s));
    return s[axis];
}

std::size_t Tensor::size() const { return data().value.size(); }

std::span<const double> Tensor::values() const { return data().value; }

std::span<double> Tensor::values_mut() {
    require(is_leaf(), "values_mut on a non-leaf tensor");
    return data().value;
}

double Tensor::item() const {
    require(size() == 1, "item() on tensor of shape " + to_string(shape()));
    return data().value[0];
}

bool Tensor::requires_grad() const { return data().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    require(is_leaf(), "requires_grad can only be changed on leaves");
    data().requires_grad = flag;
}

bool Tensor::has_grad() const { return !data().grad.empty(); }

std::span<const double> Tensor::grad() const { return data().grad; }

std::span<double> Tensor::grad_mut() {
    auto& d = data();
    if (d.grad.empty()) {
        d.grad.assign(d.value.size(), 0.0);
    }
    return d.grad;
}

void Tensor::clear_grad() { std::vector<double>().swap(data().grad); }

void Tensor::zero_grad() {
    auto& g = data().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

bool Tensor::is_leaf() const { return data().node == nullptr; }

const Node* Tensor::node() const { return data().node.get(); }

Tensor Tensor::detach() const {
    return from(shape(), data().value, false);
}

Tensor record(std::string_view op, Shape shape, std::vector<double> values,
              std::vector<Tensor> inputs, BackwardFn backward) {
    auto out = Tensor::from(std::move(shape), std::move(values));
    if (!g_grad_enabled) {
        return out;
    }
    const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
    if (needs) {
        auto& d = out.data();
        d.requires_grad = true;
        d.node = std::make_shared<Node>(Node{op, std::move(inputs), std::move(backward)});
    }
    return out;
}

namespace {

// Post-order DFS; tensors appear after all tensors they depend on.
std::vector<Tensor> topological_tensors(const Tensor& root) {
    std::vector<Tensor> order;
    std::unordered_set<const Node*> visited;
    struct Frame {
        Tensor tensor;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    if (root.node() == nullptr) {
        return order;
    }
    stack.push_back({root, 0});
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& top = stack.back();
        const Node* node = top.tensor.node();
        if (top.next_input < node->inputs.size()) {
            const Tensor& in = node->inputs[top.next_input++];
            if (in.node() != nullptr && visited.insert(in.node()).second) {
                stack.push_back({in, 0});
            }
            continue;
        }
        order.push_back(top.tensor);
        stack.pop_back();
    }
    return order;
}

}  // namespace

ComputationRecord trace(const Tensor& root) {
    ComputationRecord rec;
    for (const auto& t : topological_tensors(root)) {
        rec.ops.push_back(t.node());
    }
    return rec;
}

void backward(const Tensor& loss) {
    require(loss.defined(), "backward on undefined tensor");
    require(loss.size() == 1, "backward requires a scalar loss, got shape " + to_string(loss.shape()));
    require(loss.requires_grad(),
            "loss is not produced by recorded operations on gradient-requiring tensors");
    Tensor root = loss;
    if (root.is_leaf()) {
        root.grad_mut()[0] += 1.0;
        return;
    }
    auto order = topological_tensors(root);
    root.grad_mut()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor& t = *it;
        if (!t.has_grad()) {
            continue;
        }
        const Node* node = t.node();
        node->backward(*node, t.grad());
        // Intermediate gradients are not observable after the sweep.
        t.clear_grad();
    }
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace eegdann::ad
