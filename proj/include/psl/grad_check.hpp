#pragma once

#include <functional>
#include <vector>

#include "psl/tensor.hpp"

namespace psl {

/// Central-difference gradient of a tensor-to-scalar function. Probes only
/// forward evaluations, so it is independent of the reverse-mode tape and
/// serves as its oracle: (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps).
inline std::vector<double> finite_diff_grad(const std::function<double(const Tensor&)>& f,
                                            const Tensor& x, double eps = 1e-5) {
    std::vector<double> base(x.data().begin(), x.data().end());
    std::vector<double> g(base.size());
    for (size_t i = 0; i < base.size(); ++i) {
        std::vector<double> probe = base;
        probe[i] = base[i] + eps;
        const double fp = f(Tensor::from_data(x.shape(), probe));
        probe[i] = base[i] - eps;
        const double fm = f(Tensor::from_data(x.shape(), probe));
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

}  // namespace psl
