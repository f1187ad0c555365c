#include "psl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace psl {

std::string optimizer_kind_name(OptimizerKind kind) {
    return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

double step_lr(const StepLrSchedule& schedule, int epoch) {
    if (epoch < 0) throw std::invalid_argument("step_lr: epoch must be >= 0");
    double lr = schedule.base_lr;
    for (int m : schedule.milestones) {
        if (m <= epoch) lr *= schedule.gamma;
    }
    return lr;
}

void Sgd::step(std::vector<Tensor>& params) {
    for (auto& p : params) {
        auto& v = velocity_[p.impl()];
        if (v.empty()) v.assign(p.data().size(), 0.0);
        if (v.size() != p.data().size()) throw std::invalid_argument("sgd: parameter shape changed between steps");
        const auto g = p.grad();
        auto d = p.mutable_data();
        if (g.empty()) {
            for (auto& vi : v) vi *= momentum_;
            for (size_t i = 0; i < d.size(); ++i) d[i] -= lr_ * v[i];
            continue;
        }
        for (size_t i = 0; i < d.size(); ++i) {
            v[i] = momentum_ * v[i] + g[i];
            d[i] -= lr_ * v[i];
        }
    }
}

void Adam::step(std::vector<Tensor>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& p : params) {
        auto& mo = moments_[p.impl()];
        if (mo.m.empty()) {
            mo.m.assign(p.data().size(), 0.0);
            mo.v.assign(p.data().size(), 0.0);
        }
        if (mo.m.size() != p.data().size()) throw std::invalid_argument("adam: parameter shape changed between steps");
        const auto g = p.grad();
        auto d = p.mutable_data();
        for (size_t i = 0; i < d.size(); ++i) {
            const double gi = g.empty() ? 0.0 : g[i];
            mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * gi;
            mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = mo.m[i] / bc1;
            const double vhat = mo.v[i] / bc2;
            d[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr, double momentum) {
    if (kind == OptimizerKind::sgd) return std::make_unique<Sgd>(lr, momentum);
    return std::make_unique<Adam>(lr);
}

}  // namespace psl
