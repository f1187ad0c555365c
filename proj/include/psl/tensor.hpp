#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "psl/rng.hpp"

namespace psl {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// One node of the reverse-mode tape. Holds the forward value, the parent
/// links and the rule that pushes this node's gradient into the parents.
/// The graph is acyclic by construction: an op node only ever references
/// tensors that already exist.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until backward() reaches this node

    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

/// Dense N-dimensional double tensor with an attached differentiation
/// record. Value semantics: copies share the underlying node. Tensors are
/// immutable after creation except for parameter updates via mutable_data()
/// and gradient population via backward().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> data);
    /// Seeded uniform fill in [lo, hi); bit-reproducible from the seed.
    static Tensor uniform(Shape shape, double lo, double hi, uint64_t seed);
    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return impl_->numel(); }

    std::span<const double> data() const { return impl_->data; }
    std::span<double> mutable_data() { return impl_->data; }
    double operator[](int64_t i) const { return impl_->data[static_cast<size_t>(i)]; }

    /// Value of a one-element tensor.
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const { return impl_->grad; }
    void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }
    void clear_grad() { impl_->grad.clear(); }

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

    static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// Populate gradients of every node reachable from `loss`. Gradients are
/// overwritten, not accumulated across calls. `loss` must hold exactly one
/// element.
void backward(const Tensor& loss);

/// RAII guard: while alive, new ops do not record tape links, so no
/// gradients flow through values produced under it.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool grad_enabled();

private:
    bool prev_;
};

}  // namespace psl
