#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "psl/tensor.hpp"

namespace psl {

enum class OptimizerKind { sgd, adam };

std::string optimizer_kind_name(OptimizerKind kind);

/// Step-decay learning rate: base_lr * gamma^(number of milestones <= epoch).
struct StepLrSchedule {
    double base_lr = 0.01;
    std::vector<int> milestones;  // strictly ascending epochs
    double gamma = 0.1;
};

double step_lr(const StepLrSchedule& schedule, int epoch);

/// SGD with momentum and Adam behind one interface. Auxiliary buffers are
/// created lazily on the first step a parameter is seen and persist across
/// steps; replacing the optimizer mid-training means constructing a new one
/// (buffers are not carried over).
class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(std::vector<Tensor>& params) = 0;
    virtual OptimizerKind kind() const = 0;

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

protected:
    explicit Optimizer(double lr) : lr_(lr) {}
    double lr_;
};

class Sgd final : public Optimizer {
public:
    explicit Sgd(double lr, double momentum = 0.9) : Optimizer(lr), momentum_(momentum) {}

    /// v <- momentum*v + g ; p <- p - lr*v
    void step(std::vector<Tensor>& params) override;
    OptimizerKind kind() const override { return OptimizerKind::sgd; }

private:
    double momentum_;
    std::unordered_map<TensorImpl*, std::vector<double>> velocity_;
};

class Adam final : public Optimizer {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : Optimizer(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<Tensor>& params) override;
    OptimizerKind kind() const override { return OptimizerKind::adam; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::unordered_map<TensorImpl*, Moments> moments_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr, double momentum);

}  // namespace psl
