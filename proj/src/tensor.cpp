#include "psl/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace psl {

namespace {
thread_local bool g_grad_enabled = true;
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

static void check_shape(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one extent");
    for (int e : shape) {
        if (e < 1) throw std::invalid_argument("tensor extents must be >= 1, got " + shape_str(shape));
    }
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    check_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<size_t>(shape_numel(shape)), value);
    impl->shape = std::move(shape);
    return wrap(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    check_shape(shape);
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return wrap(std::move(impl));
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, uint64_t seed) {
    Rng rng(seed);
    return uniform(std::move(shape), lo, hi, rng);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
    check_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data.resize(static_cast<size_t>(shape_numel(impl->shape)));
    for (auto& v : impl->data) v = rng.uniform(lo, hi);
    return wrap(std::move(impl));
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() requires a one-element tensor, shape is " + shape_str(shape()));
    return impl_->data[0];
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("backward() requires a scalar loss");
    }

    // Iterative DFS to reverse topological order.
    std::vector<TensorImpl*> topo;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.impl(), 0});
    visited.insert(loss.impl());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorImpl* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    // Overwrite semantics: reset grads of every reachable node, then
    // accumulate within this single pass.
    for (TensorImpl* n : topo) n->grad.assign(n->data.size(), 0.0);
    loss.impl()->grad[0] = 1.0;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorImpl* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

}  // namespace psl
