#pragma once

#include <cmath>
#include <vector>

#include "peftcl/autodiff.hpp"
#include "peftcl/rng.hpp"
#include "peftcl/tensor.hpp"

namespace testutil {

inline peftcl::TensorPtr random_tensor(peftcl::Shape shape, const peftcl::Rng& rng,
                                       uint64_t stream, bool requires_grad = false,
                                       double lo = -1.0, double hi = 1.0) {
    auto t = peftcl::Tensor::zeros(std::move(shape), requires_grad);
    rng.fill_uniform(t->data(), stream, lo, hi);
    return t;
}

inline double rel_err(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-3});
    return std::fabs(a - b) / denom;
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
    return worst;
}

// analytic grad of `loss_fn(x)` w.r.t. x against central differences
inline double gradcheck(const std::function<peftcl::TensorPtr(peftcl::Tape*, const peftcl::TensorPtr&)>& loss_fn,
                        const peftcl::TensorPtr& x, double h = 1e-4) {
    peftcl::Tape tape;
    auto loss = loss_fn(&tape, x);
    tape.backward(loss);
    std::vector<double> analytic = x->has_grad() ? x->grad() : std::vector<double>(x->size(), 0.0);

    auto fd = peftcl::finite_difference_gradient(
        [&](const peftcl::Tensor& probe) {
            auto xc = peftcl::Tensor::from(probe.shape(), probe.data(), false);
            return loss_fn(nullptr, xc)->item();
        },
        *x, h);
    return max_rel_err(analytic, fd->data());
}

}  // namespace testutil
