#include "psl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace psl {

namespace {

std::shared_ptr<TensorImpl> make_node(Shape shape, const char* op) {
    auto impl = std::make_shared<TensorImpl>();
    impl->data.resize(static_cast<size_t>(shape_numel(shape)));
    impl->shape = std::move(shape);
    impl->op = op;
    return impl;
}

bool track_grad(std::initializer_list<const Tensor*> inputs) {
    if (!NoGradGuard::grad_enabled()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

/// Attach tape links if gradient tracking is active for these inputs.
void link(const std::shared_ptr<TensorImpl>& node,
          std::initializer_list<const Tensor*> inputs,
          std::function<void(TensorImpl&)> fn) {
    if (!track_grad(inputs)) return;
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->impl_ptr());
    node->backward_fn = std::move(fn);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

/// Shared skeleton for unary maps: y_i = f(x_i), dx_i += df(x_i, y_i) * dy_i.
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Bwd bwd) {
    auto node = make_node(a.shape(), name);
    const auto x = a.data();
    for (size_t i = 0; i < node->data.size(); ++i) node->data[i] = fwd(x[i]);
    auto ap = a.impl_ptr();
    link(node, {&a}, [ap, bwd](TensorImpl& self) {
        for (size_t i = 0; i < self.data.size(); ++i) {
            ap->grad[i] += bwd(ap->data[i], self.data[i]) * self.grad[i];
        }
    });
    return Tensor::wrap(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto node = make_node(a.shape(), "add");
    const auto x = a.data(), y = b.data();
    for (size_t i = 0; i < node->data.size(); ++i) node->data[i] = x[i] + y[i];
    auto ap = a.impl_ptr(), bp = b.impl_ptr();
    link(node, {&a, &b}, [ap, bp](TensorImpl& self) {
        for (size_t i = 0; i < self.data.size(); ++i) {
            ap->grad[i] += self.grad[i];
            bp->grad[i] += self.grad[i];
        }
    });
    return Tensor::wrap(node);
}

Tensor add(const Tensor& a, double s) {
    return unary_op(a, "add_scalar", [s](double x) { return x + s; },
                    [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto node = make_node(a.shape(), "sub");
    const auto x = a.data(), y = b.data();
    for (size_t i = 0; i < node->data.size(); ++i) node->data[i] = x[i] - y[i];
    auto ap = a.impl_ptr(), bp = b.impl_ptr();
    link(node, {&a, &b}, [ap, bp](TensorImpl& self) {
        for (size_t i = 0; i < self.data.size(); ++i) {
            ap->grad[i] += self.grad[i];
            bp->grad[i] -= self.grad[i];
        }
    });
    return Tensor::wrap(node);
}

Tensor sub(const Tensor& a, double s) { return add(a, -s); }

Tensor rsub(double s, const Tensor& a) {
    return unary_op(a, "rsub", [s](double x) { return s - x; },
                    [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto node = make_node(a.shape(), "mul");
    const auto x = a.data(), y = b.data();
    for (size_t i = 0; i < node->data.size(); ++i) node->data[i] = x[i] * y[i];
    auto ap = a.impl_ptr(), bp = b.impl_ptr();
    link(node, {&a, &b}, [ap, bp](TensorImpl& self) {
        for (size_t i = 0; i < self.data.size(); ++i) {
            ap->grad[i] += self.grad[i] * bp->data[i];
            bp->grad[i] += self.grad[i] * ap->data[i];
        }
    });
    return Tensor::wrap(node);
}

Tensor mul(const Tensor& a, double s) {
    return unary_op(a, "mul_scalar", [s](double x) { return x * s; },
                    [s](double, double) { return s; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    auto node = make_node(a.shape(), "div");
    const auto x = a.data(), y = b.data();
    for (size_t i = 0; i < node->data.size(); ++i) node->data[i] = x[i] / y[i];
    auto ap = a.impl_ptr(), bp = b.impl_ptr();
    link(node, {&a, &b}, [ap, bp](TensorImpl& self) {
        for (size_t i = 0; i < self.data.size(); ++i) {
            const double inv = 1.0 / bp->data[i];
            ap->grad[i] += self.grad[i] * inv;
            bp->grad[i] -= self.grad[i] * ap->data[i] * inv * inv;
        }
    });
    return Tensor::wrap(node);
}

Tensor neg(const Tensor& a) {
    return unary_op(a, "neg", [](double x) { return -x; },
                    [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& a) {
    return unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    // Stable in both tails: never evaluates exp of a large positive value.
    auto fwd = [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    };
    return unary_op(a, "sigmoid", fwd,
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
    return unary_op(a, "exp", [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.data()) {
        if (!(v > 0.0)) throw std::invalid_argument("log: input must be positive");
    }
    return unary_op(a, "log", [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must be <= hi");
    auto fwd = [lo, hi](double x) { return std::min(std::max(x, lo), hi); };
    auto bwd = [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; };
    return unary_op(a, "clamp", fwd, bwd);
}

Tensor sum(const Tensor& a) {
    auto node = make_node({1}, "sum");
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    node->data[0] = acc;
    auto ap = a.impl_ptr();
    link(node, {&a}, [ap](TensorImpl& self) {
        const double g = self.grad[0];
        for (auto& gi : ap->grad) gi += g;
    });
    return Tensor::wrap(node);
}

Tensor mean(const Tensor& a) {
    const double inv_n = 1.0 / static_cast<double>(a.numel());
    auto node = make_node({1}, "mean");
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    node->data[0] = acc * inv_n;
    auto ap = a.impl_ptr();
    link(node, {&a}, [ap, inv_n](TensorImpl& self) {
        const double g = self.grad[0] * inv_n;
        for (auto& gi : ap->grad) gi += g;
    });
    return Tensor::wrap(node);
}

static void require_rank4(const Tensor& t, const char* op) {
    if (t.rank() != 4) {
        throw std::invalid_argument(std::string(op) + ": expected NCHW tensor, got shape " +
                                    shape_str(t.shape()));
    }
}

Tensor sum_channels(const Tensor& a) {
    require_rank4(a, "sum_channels");
    const int n = a.dim(0), c = a.dim(1);
    const int64_t hw = static_cast<int64_t>(a.dim(2)) * a.dim(3);
    auto node = make_node({c}, "sum_channels");
    const auto x = a.data();
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const double* p = x.data() + (static_cast<int64_t>(in) * c + ic) * hw;
            double acc = 0.0;
            for (int64_t i = 0; i < hw; ++i) acc += p[i];
            node->data[static_cast<size_t>(ic)] += acc;
        }
    }
    auto ap = a.impl_ptr();
    link(node, {&a}, [ap, n, c, hw](TensorImpl& self) {
        for (int in = 0; in < n; ++in) {
            for (int ic = 0; ic < c; ++ic) {
                double* g = ap->grad.data() + (static_cast<int64_t>(in) * c + ic) * hw;
                const double gc = self.grad[static_cast<size_t>(ic)];
                for (int64_t i = 0; i < hw; ++i) g[i] += gc;
            }
        }
    });
    return Tensor::wrap(node);
}

Tensor global_avg_pool(const Tensor& a) {
    require_rank4(a, "global_avg_pool");
    const int n = a.dim(0), c = a.dim(1);
    const int64_t hw = static_cast<int64_t>(a.dim(2)) * a.dim(3);
    const double inv_hw = 1.0 / static_cast<double>(hw);
    auto node = make_node({n, c}, "global_avg_pool");
    const auto x = a.data();
    for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
        const double* p = x.data() + nc * hw;
        double acc = 0.0;
        for (int64_t i = 0; i < hw; ++i) acc += p[i];
        node->data[static_cast<size_t>(nc)] = acc * inv_hw;
    }
    auto ap = a.impl_ptr();
    link(node, {&a}, [ap, n, c, hw, inv_hw](TensorImpl& self) {
        for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
            double* g = ap->grad.data() + nc * hw;
            const double gc = self.grad[static_cast<size_t>(nc)] * inv_hw;
            for (int64_t i = 0; i < hw; ++i) g[i] += gc;
        }
    });
    return Tensor::wrap(node);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw std::invalid_argument("matmul: both operands must be rank-2");
    }
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
    }
    auto node = make_node({m, n}, "matmul");
    const auto x = a.data(), y = b.data();
    for (int i = 0; i < m; ++i) {
        double* out = node->data.data() + static_cast<int64_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double v = x[static_cast<size_t>(i) * k + kk];
            const double* row = y.data() + static_cast<int64_t>(kk) * n;
            for (int j = 0; j < n; ++j) out[j] += v * row[j];
        }
    }
    auto ap = a.impl_ptr(), bp = b.impl_ptr();
    link(node, {&a, &b}, [ap, bp, m, k, n](TensorImpl& self) {
        // dA = dC * B^T ; dB = A^T * dC
        for (int i = 0; i < m; ++i) {
            const double* gout = self.grad.data() + static_cast<int64_t>(i) * n;
            for (int kk = 0; kk < k; ++kk) {
                const double* brow = bp->data.data() + static_cast<int64_t>(kk) * n;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += gout[j] * brow[j];
                ap->grad[static_cast<size_t>(i) * k + kk] += acc;
            }
        }
        for (int kk = 0; kk < k; ++kk) {
            double* gb = bp->grad.data() + static_cast<int64_t>(kk) * n;
            for (int i = 0; i < m; ++i) {
                const double v = ap->data[static_cast<size_t>(i) * k + kk];
                const double* gout = self.grad.data() + static_cast<int64_t>(i) * n;
                for (int j = 0; j < n; ++j) gb[j] += v * gout[j];
            }
        }
    });
    return Tensor::wrap(node);
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    if (a.rank() != 2 || v.rank() != 1 || a.dim(1) != v.dim(0)) {
        throw std::invalid_argument("add_rowvec: need [N,M] and [M], got " +
                                    shape_str(a.shape()) + " and " + shape_str(v.shape()));
    }
    const int n = a.dim(0), m = a.dim(1);
    auto node = make_node(a.shape(), "add_rowvec");
    const auto x = a.data(), y = v.data();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            node->data[static_cast<size_t>(i) * m + j] = x[static_cast<size_t>(i) * m + j] + y[static_cast<size_t>(j)];
        }
    }
    auto ap = a.impl_ptr(), vp = v.impl_ptr();
    link(node, {&a, &v}, [ap, vp, n, m](TensorImpl& self) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) {
                const double g = self.grad[static_cast<size_t>(i) * m + j];
                ap->grad[static_cast<size_t>(i) * m + j] += g;
                vp->grad[static_cast<size_t>(j)] += g;
            }
        }
    });
    return Tensor::wrap(node);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad) {
    require_rank4(input, "conv2d");
    require_rank4(kernel, "conv2d kernel");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
    const int n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int co = kernel.dim(0), kci = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (ci != kci) {
        throw std::invalid_argument("conv2d: input channels " + std::to_string(ci) +
                                    " != kernel input channels " + std::to_string(kci));
    }
    if (bias.rank() != 1 || bias.dim(0) != co) {
        throw std::invalid_argument("conv2d: bias must have shape [" + std::to_string(co) + "]");
    }
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    if (h + 2 * pad < kh || w + 2 * pad < kw || ho < 1 || wo < 1) {
        throw std::invalid_argument("conv2d: kernel larger than padded input");
    }

    auto node = make_node({n, co, ho, wo}, "conv2d");
    const double* x = input.data().data();
    const double* k = kernel.data().data();
    const double* b = bias.data().data();
    double* out = node->data.data();

    const int64_t in_img = static_cast<int64_t>(ci) * h * w;
    const int64_t out_img = static_cast<int64_t>(co) * ho * wo;

    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < co; ++oc) {
            double* oimg = out + in * out_img + static_cast<int64_t>(oc) * ho * wo;
            const double bv = b[oc];
            for (int64_t i = 0; i < static_cast<int64_t>(ho) * wo; ++i) oimg[i] = bv;
            for (int ic = 0; ic < ci; ++ic) {
                const double* ximg = x + in * in_img + static_cast<int64_t>(ic) * h * w;
                const double* kk = k + ((static_cast<int64_t>(oc) * ci + ic) * kh) * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wgt = kk[static_cast<int64_t>(ky) * kw + kx];
                        if (wgt == 0.0) continue;
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            const double* xrow = ximg + static_cast<int64_t>(iy) * w;
                            double* orow = oimg + static_cast<int64_t>(oy) * wo;
                            // valid ox range so that ix = ox*stride - pad + kx in [0, w)
                            int ox_lo = 0, ox_hi = wo;
                            while (ox_lo < wo && ox_lo * stride - pad + kx < 0) ++ox_lo;
                            while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad + kx >= w) --ox_hi;
                            const double* xi = xrow + static_cast<int64_t>(ox_lo) * stride - pad + kx;
                            if (stride == 1) {
                                for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wgt * xi[ox - ox_lo];
                            } else {
                                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                    orow[ox] += wgt * xrow[static_cast<int64_t>(ox) * stride - pad + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    auto xp = input.impl_ptr(), kp = kernel.impl_ptr(), bp = bias.impl_ptr();
    link(node, {&input, &kernel, &bias},
         [xp, kp, bp, n, ci, h, w, co, kh, kw, ho, wo, stride, pad](TensorImpl& self) {
        const int64_t in_img = static_cast<int64_t>(ci) * h * w;
        const int64_t out_img = static_cast<int64_t>(co) * ho * wo;
        const double* gout = self.grad.data();
        for (int in = 0; in < n; ++in) {
            for (int oc = 0; oc < co; ++oc) {
                const double* gimg = gout + in * out_img + static_cast<int64_t>(oc) * ho * wo;
                double gb = 0.0;
                for (int64_t i = 0; i < static_cast<int64_t>(ho) * wo; ++i) gb += gimg[i];
                bp->grad[static_cast<size_t>(oc)] += gb;
                for (int ic = 0; ic < ci; ++ic) {
                    const double* ximg = xp->data.data() + in * in_img + static_cast<int64_t>(ic) * h * w;
                    double* gximg = xp->grad.data() + in * in_img + static_cast<int64_t>(ic) * h * w;
                    const int64_t kbase = (static_cast<int64_t>(oc) * ci + ic) * kh * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const double wgt = kp->data[static_cast<size_t>(kbase + ky * kw + kx)];
                            double gw = 0.0;
                            for (int oy = 0; oy < ho; ++oy) {
                                const int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= h) continue;
                                const double* xrow = ximg + static_cast<int64_t>(iy) * w;
                                double* gxrow = gximg + static_cast<int64_t>(iy) * w;
                                const double* grow = gimg + static_cast<int64_t>(oy) * wo;
                                for (int ox = 0; ox < wo; ++ox) {
                                    const int ix = ox * stride - pad + kx;
                                    if (ix < 0 || ix >= w) continue;
                                    const double g = grow[ox];
                                    gw += g * xrow[ix];
                                    gxrow[ix] += g * wgt;
                                }
                            }
                            kp->grad[static_cast<size_t>(kbase + ky * kw + kx)] += gw;
                        }
                    }
                }
            }
        }
    });
    return Tensor::wrap(node);
}

Tensor maxpool2d(const Tensor& input) {
    require_rank4(input, "maxpool2d");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw std::invalid_argument("maxpool2d: H and W must be even, got " + shape_str(input.shape()));
    }
    const int ho = h / 2, wo = w / 2;
    auto node = make_node({n, c, ho, wo}, "maxpool2d");
    // argmax offsets saved for the backward route
    auto argmax = std::make_shared<std::vector<int64_t>>(node->data.size());
    const double* x = input.data().data();
    for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
        const double* img = x + nc * h * w;
        double* out = node->data.data() + nc * ho * wo;
        int64_t* am = argmax->data() + nc * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                const int iy = oy * 2, ix = ox * 2;
                int64_t best = static_cast<int64_t>(iy) * w + ix;
                double bv = img[best];
                const int64_t cand[3] = {static_cast<int64_t>(iy) * w + ix + 1,
                                         static_cast<int64_t>(iy + 1) * w + ix,
                                         static_cast<int64_t>(iy + 1) * w + ix + 1};
                for (int64_t ci : cand) {
                    if (img[ci] > bv) {
                        bv = img[ci];
                        best = ci;
                    }
                }
                out[static_cast<int64_t>(oy) * wo + ox] = bv;
                am[static_cast<int64_t>(oy) * wo + ox] = nc * h * w + best;
            }
        }
    }
    auto xp = input.impl_ptr();
    link(node, {&input}, [xp, argmax](TensorImpl& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
            xp->grad[static_cast<size_t>((*argmax)[i])] += self.grad[i];
        }
    });
    return Tensor::wrap(node);
}

Tensor upsample_nearest(const Tensor& input, int factor) {
    require_rank4(input, "upsample_nearest");
    if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int ho = h * factor, wo = w * factor;
    auto node = make_node({n, c, ho, wo}, "upsample_nearest");
    const double* x = input.data().data();
    for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
        const double* img = x + nc * h * w;
        double* out = node->data.data() + nc * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
            const double* irow = img + static_cast<int64_t>(oy / factor) * w;
            double* orow = out + static_cast<int64_t>(oy) * wo;
            for (int ox = 0; ox < wo; ++ox) orow[ox] = irow[ox / factor];
        }
    }
    auto xp = input.impl_ptr();
    link(node, {&input}, [xp, n, c, h, w, factor](TensorImpl& self) {
        const int ho = h * factor, wo = w * factor;
        for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
            double* gimg = xp->grad.data() + nc * h * w;
            const double* gout = self.grad.data() + nc * ho * wo;
            for (int oy = 0; oy < ho; ++oy) {
                double* grow = gimg + static_cast<int64_t>(oy / factor) * w;
                const double* gorow = gout + static_cast<int64_t>(oy) * wo;
                for (int ox = 0; ox < wo; ++ox) grow[ox / factor] += gorow[ox];
            }
        }
    });
    return Tensor::wrap(node);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank4(a, "concat_channels");
    require_rank4(b, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw std::invalid_argument("concat_channels: batch/spatial mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    auto node = make_node({n, ca + cb, h, w}, "concat_channels");
    const double* xa = a.data().data();
    const double* xb = b.data().data();
    for (int in = 0; in < n; ++in) {
        double* out = node->data.data() + static_cast<int64_t>(in) * (ca + cb) * hw;
        std::copy_n(xa + static_cast<int64_t>(in) * ca * hw, ca * hw, out);
        std::copy_n(xb + static_cast<int64_t>(in) * cb * hw, cb * hw, out + ca * hw);
    }
    auto ap = a.impl_ptr(), bp = b.impl_ptr();
    link(node, {&a, &b}, [ap, bp, n, ca, cb, hw](TensorImpl& self) {
        for (int in = 0; in < n; ++in) {
            const double* g = self.grad.data() + static_cast<int64_t>(in) * (ca + cb) * hw;
            double* ga = ap->grad.data() + static_cast<int64_t>(in) * ca * hw;
            double* gb = bp->grad.data() + static_cast<int64_t>(in) * cb * hw;
            for (int64_t i = 0; i < ca * hw; ++i) ga[i] += g[i];
            for (int64_t i = 0; i < cb * hw; ++i) gb[i] += g[ca * hw + i];
        }
    });
    return Tensor::wrap(node);
}

Tensor softmax_channels(const Tensor& input) {
    require_rank4(input, "softmax_channels");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    auto node = make_node(input.shape(), "softmax_channels");
    const double* x = input.data().data();
    double* y = node->data.data();
    for (int in = 0; in < n; ++in) {
        const double* xi = x + static_cast<int64_t>(in) * c * hw;
        double* yi = y + static_cast<int64_t>(in) * c * hw;
        for (int64_t p = 0; p < hw; ++p) {
            double mx = xi[p];
            for (int ic = 1; ic < c; ++ic) mx = std::max(mx, xi[static_cast<int64_t>(ic) * hw + p]);
            double z = 0.0;
            for (int ic = 0; ic < c; ++ic) {
                const double e = std::exp(xi[static_cast<int64_t>(ic) * hw + p] - mx);
                yi[static_cast<int64_t>(ic) * hw + p] = e;
                z += e;
            }
            const double inv = 1.0 / z;
            for (int ic = 0; ic < c; ++ic) yi[static_cast<int64_t>(ic) * hw + p] *= inv;
        }
    }
    auto xp = input.impl_ptr();
    link(node, {&input}, [xp, n, c, hw](TensorImpl& self) {
        // dx_c = y_c * (g_c - sum_k g_k y_k), per pixel
        for (int in = 0; in < n; ++in) {
            const double* yi = self.data.data() + static_cast<int64_t>(in) * c * hw;
            const double* gi = self.grad.data() + static_cast<int64_t>(in) * c * hw;
            double* gx = xp->grad.data() + static_cast<int64_t>(in) * c * hw;
            for (int64_t p = 0; p < hw; ++p) {
                double dot = 0.0;
                for (int ic = 0; ic < c; ++ic) {
                    const int64_t o = static_cast<int64_t>(ic) * hw + p;
                    dot += gi[o] * yi[o];
                }
                for (int ic = 0; ic < c; ++ic) {
                    const int64_t o = static_cast<int64_t>(ic) * hw + p;
                    gx[o] += yi[o] * (gi[o] - dot);
                }
            }
        }
    });
    return Tensor::wrap(node);
}

}  // namespace psl
