#include "peftcl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "peftcl/kernels.hpp"

namespace peftcl {

void Tape::backward(const TensorPtr& loss) {
    if (loss->size() != 1) {
        throw ContractError("backward requires a scalar loss, got " + shape_str(loss->shape()));
    }
    if (consumed_) {
        throw ContractError("backward called twice on the same tape without reset");
    }
    consumed_ = true;
    loss->grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

namespace ops {

namespace {

bool track(Tape* tape, std::initializer_list<const TensorPtr*> inputs) {
    if (tape == nullptr) return false;
    for (const TensorPtr* t : inputs) {
        if ((*t)->requires_grad()) return true;
    }
    return false;
}

void require_2d(const TensorPtr& t, const char* what) {
    if (t->ndim() != 2) {
        throw ShapeError(std::string(what) + " expects a 2-D tensor, got " +
                         shape_str(t->shape()));
    }
}

}  // namespace

double gelu_value(double x) {
    // exact erf form x * Phi(x); the tanh approximation would poison the
    // finite-difference oracle
    return 0.5 * x * std::erfc(-x * M_SQRT1_2);
}

double gelu_derivative(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    const double Phi = 0.5 * std::erfc(-x * M_SQRT1_2);
    return Phi + x * phi;
}

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int m = a->rows(), k = a->cols(), n = b->cols();
    if (b->rows() != k) {
        throw ShapeError("matmul dimension mismatch " + shape_str(a->shape()) + " x " +
                         shape_str(b->shape()));
    }
    const bool rg = track(tape, {&a, &b});
    auto out = Tensor::zeros({m, n}, rg);
    kernels::active().matmul_nn(a->ptr(), b->ptr(), out->ptr(), m, k, n, false);
    if (rg) {
        tape->record([a, b, out, m, k, n] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            if (a->requires_grad()) {
                kernels::active().matmul_nt(g, b->ptr(), a->grad_ptr(), m, n, k, true);
            }
            if (b->requires_grad()) {
                kernels::active().matmul_tn(a->ptr(), g, b->grad_ptr(), k, m, n, true);
            }
        });
    }
    return out;
}

TensorPtr transpose(Tape* tape, const TensorPtr& a) {
    require_2d(a, "transpose");
    const int m = a->rows(), n = a->cols();
    const bool rg = track(tape, {&a});
    auto out = Tensor::zeros({n, m}, rg);
    const double* src = a->ptr();
    double* dst = out->ptr();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) dst[static_cast<int64_t>(j) * m + i] = src[static_cast<int64_t>(i) * n + j];
    }
    if (rg) {
        tape->record([a, out, m, n] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            double* ga = a->grad_ptr();
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < m; ++i) {
                    ga[static_cast<int64_t>(i) * n + j] += g[static_cast<int64_t>(j) * m + i];
                }
            }
        });
    }
    return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape() != b->shape()) {
        throw ShapeError("add shape mismatch " + shape_str(a->shape()) + " vs " +
                         shape_str(b->shape()));
    }
    const bool rg = track(tape, {&a, &b});
    auto out = Tensor::zeros(a->shape(), rg);
    kernels::active().add(a->ptr(), b->ptr(), out->ptr(), a->size());
    if (rg) {
        tape->record([a, b, out] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            if (a->requires_grad()) kernels::active().axpy(1.0, g, a->grad_ptr(), a->size());
            if (b->requires_grad()) kernels::active().axpy(1.0, g, b->grad_ptr(), b->size());
        });
    }
    return out;
}

TensorPtr add_rowvec(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_2d(a, "add_rowvec");
    const int m = a->rows(), n = a->cols();
    if (b->size() != n) {
        throw ShapeError("add_rowvec width mismatch " + shape_str(a->shape()) + " vs " +
                         shape_str(b->shape()));
    }
    const bool rg = track(tape, {&a, &b});
    auto out = Tensor::zeros(a->shape(), rg);
    for (int i = 0; i < m; ++i) {
        kernels::active().add(a->ptr() + static_cast<int64_t>(i) * n, b->ptr(),
                              out->ptr() + static_cast<int64_t>(i) * n, n);
    }
    if (rg) {
        tape->record([a, b, out, m, n] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            if (a->requires_grad()) kernels::active().axpy(1.0, g, a->grad_ptr(), a->size());
            if (b->requires_grad()) {
                double* gb = b->grad_ptr();
                for (int i = 0; i < m; ++i) {
                    kernels::active().axpy(1.0, g + static_cast<int64_t>(i) * n, gb, n);
                }
            }
        });
    }
    return out;
}

TensorPtr scale(Tape* tape, const TensorPtr& a, double c) {
    const bool rg = track(tape, {&a});
    auto out = Tensor::zeros(a->shape(), rg);
    kernels::active().scale(a->ptr(), c, out->ptr(), a->size());
    if (rg) {
        tape->record([a, out, c] {
            if (!out->has_grad()) return;
            kernels::active().axpy(c, out->grad().data(), a->grad_ptr(), a->size());
        });
    }
    return out;
}

TensorPtr hadamard(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape() != b->shape()) {
        throw ShapeError("hadamard shape mismatch " + shape_str(a->shape()) + " vs " +
                         shape_str(b->shape()));
    }
    const bool rg = track(tape, {&a, &b});
    auto out = Tensor::zeros(a->shape(), rg);
    kernels::active().mul(a->ptr(), b->ptr(), out->ptr(), a->size());
    if (rg) {
        tape->record([a, b, out] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            const int64_t n = a->size();
            if (a->requires_grad()) {
                double* ga = a->grad_ptr();
                const double* bv = b->ptr();
                for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
            }
            if (b->requires_grad()) {
                double* gb = b->grad_ptr();
                const double* av = a->ptr();
                for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
            }
        });
    }
    return out;
}

TensorPtr sum(Tape* tape, const TensorPtr& a) {
    const bool rg = track(tape, {&a});
    auto out = Tensor::zeros({1}, rg);
    out->data()[0] = kernels::active().sum(a->ptr(), a->size());
    if (rg) {
        tape->record([a, out] {
            if (!out->has_grad()) return;
            const double g = out->grad()[0];
            double* ga = a->grad_ptr();
            for (int64_t i = 0; i < a->size(); ++i) ga[i] += g;
        });
    }
    return out;
}

TensorPtr gelu(Tape* tape, const TensorPtr& a) {
    const bool rg = track(tape, {&a});
    auto out = Tensor::zeros(a->shape(), rg);
    const double* x = a->ptr();
    double* y = out->ptr();
    for (int64_t i = 0; i < a->size(); ++i) y[i] = gelu_value(x[i]);
    if (rg) {
        tape->record([a, out] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            const double* x = a->ptr();
            double* ga = a->grad_ptr();
            for (int64_t i = 0; i < a->size(); ++i) ga[i] += g[i] * gelu_derivative(x[i]);
        });
    }
    return out;
}

TensorPtr softmax_rows(Tape* tape, const TensorPtr& a) {
    require_2d(a, "softmax_rows");
    if (!a->all_finite()) throw NumericError("softmax_rows on non-finite input");
    const int m = a->rows(), n = a->cols();
    const bool rg = track(tape, {&a});
    auto out = Tensor::zeros(a->shape(), rg);
    for (int i = 0; i < m; ++i) {
        const double* x = a->ptr() + static_cast<int64_t>(i) * n;
        double* y = out->ptr() + static_cast<int64_t>(i) * n;
        double mx = x[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < n; ++j) y[j] *= inv;
    }
    if (rg) {
        tape->record([a, out, m, n] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            double* ga = a->grad_ptr();
            const double* y = out->ptr();
            for (int i = 0; i < m; ++i) {
                const int64_t off = static_cast<int64_t>(i) * n;
                const double dotgy = kernels::active().dot(g + off, y + off, n);
                for (int j = 0; j < n; ++j) ga[off + j] += y[off + j] * (g[off + j] - dotgy);
            }
        });
    }
    return out;
}

TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                     double eps) {
    require_2d(x, "layer_norm");
    const int m = x->rows(), d = x->cols();
    if (gain->size() != d || bias->size() != d) {
        throw ShapeError("layer_norm gain/bias must have length " + std::to_string(d));
    }
    const bool rg = track(tape, {&x, &gain, &bias});
    auto out = Tensor::zeros(x->shape(), rg);
    // keep normalized rows and 1/sigma for backward
    auto xhat = Tensor::zeros(x->shape());
    std::vector<double> rstd(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double* xi = x->ptr() + static_cast<int64_t>(i) * d;
        double* hi = xhat->ptr() + static_cast<int64_t>(i) * d;
        double* yi = out->ptr() + static_cast<int64_t>(i) * d;
        double mean = kernels::active().sum(xi, d) / d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xi[j] - mean;
            var += c * c;
        }
        var /= d;
        const double rs = 1.0 / std::sqrt(var + eps);
        rstd[static_cast<size_t>(i)] = rs;
        for (int j = 0; j < d; ++j) {
            hi[j] = (xi[j] - mean) * rs;
            yi[j] = hi[j] * gain->ptr()[j] + bias->ptr()[j];
        }
    }
    if (rg) {
        tape->record([x, gain, bias, out, xhat, rstd, m, d] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            for (int i = 0; i < m; ++i) {
                const int64_t off = static_cast<int64_t>(i) * d;
                const double* gi = g + off;
                const double* hi = xhat->ptr() + off;
                if (gain->requires_grad()) {
                    double* gg = gain->grad_ptr();
                    for (int j = 0; j < d; ++j) gg[j] += gi[j] * hi[j];
                }
                if (bias->requires_grad()) {
                    kernels::active().axpy(1.0, gi, bias->grad_ptr(), d);
                }
                if (x->requires_grad()) {
                    // d = g * gain; dx = rstd * (d - mean(d) - xhat * mean(d*xhat))
                    double mean_dg = 0.0, mean_dgh = 0.0;
                    const double* w = gain->ptr();
                    for (int j = 0; j < d; ++j) {
                        const double dj = gi[j] * w[j];
                        mean_dg += dj;
                        mean_dgh += dj * hi[j];
                    }
                    mean_dg /= d;
                    mean_dgh /= d;
                    double* gx = x->grad_ptr() + off;
                    const double rs = rstd[static_cast<size_t>(i)];
                    for (int j = 0; j < d; ++j) {
                        const double dj = gi[j] * w[j];
                        gx[j] += rs * (dj - mean_dg - hi[j] * mean_dgh);
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr cross_entropy_masked(Tape* tape, const TensorPtr& logits, const std::vector<int>& labels,
                               const std::vector<uint8_t>& mask) {
    require_2d(logits, "cross_entropy_masked");
    const int b = logits->rows(), c = logits->cols();
    if (static_cast<int>(labels.size()) != b) {
        throw ShapeError("cross_entropy label count " + std::to_string(labels.size()) +
                         " vs batch " + std::to_string(b));
    }
    if (static_cast<int>(mask.size()) != c) {
        throw ShapeError("cross_entropy mask length " + std::to_string(mask.size()) +
                         " vs classes " + std::to_string(c));
    }
    for (int i = 0; i < b; ++i) {
        if (labels[i] < 0 || labels[i] >= c) {
            throw ContractError("label " + std::to_string(labels[i]) + " out of range");
        }
        if (!mask[static_cast<size_t>(labels[i])]) {
            throw ContractError("label " + std::to_string(labels[i]) + " is masked out");
        }
    }
    const bool rg = track(tape, {&logits});
    auto out = Tensor::zeros({1}, rg);
    // softmax rows of masked logits, kept for backward
    auto probs = Tensor::zeros(logits->shape());
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        const double* z = logits->ptr() + static_cast<int64_t>(i) * c;
        double* p = probs->ptr() + static_cast<int64_t>(i) * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) {
            p[j] = z[j] + (mask[static_cast<size_t>(j)] ? 0.0 : -1e9);
            mx = std::max(mx, p[j]);
        }
        double den = 0.0;
        for (int j = 0; j < c; ++j) {
            p[j] = std::exp(p[j] - mx);
            den += p[j];
        }
        const double inv = 1.0 / den;
        for (int j = 0; j < c; ++j) p[j] *= inv;
        total -= std::log(p[labels[static_cast<size_t>(i)]]);
    }
    out->data()[0] = total / b;
    if (rg) {
        tape->record([logits, probs, labels, out, b, c] {
            if (!out->has_grad()) return;
            const double g = out->grad()[0] / b;
            double* gl = logits->grad_ptr();
            const double* p = probs->ptr();
            for (int i = 0; i < b; ++i) {
                const int64_t off = static_cast<int64_t>(i) * c;
                for (int j = 0; j < c; ++j) gl[off + j] += g * p[off + j];
                gl[off + labels[static_cast<size_t>(i)]] -= g;
            }
        });
    }
    return out;
}

TensorPtr cross_entropy(Tape* tape, const TensorPtr& logits, const std::vector<int>& labels) {
    return cross_entropy_masked(tape, logits, labels,
                                std::vector<uint8_t>(static_cast<size_t>(logits->cols()), 1));
}

TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of zero parts");
    const int n = parts[0]->cols();
    int m = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        if (p->cols() != n) throw ShapeError("concat_rows width mismatch");
        m += p->rows();
        rg = rg || (tape != nullptr && p->requires_grad());
    }
    auto out = Tensor::zeros({m, n}, rg);
    int row = 0;
    for (const auto& p : parts) {
        std::memcpy(out->ptr() + static_cast<int64_t>(row) * n, p->ptr(),
                    static_cast<size_t>(p->size()) * sizeof(double));
        row += p->rows();
    }
    if (rg) {
        tape->record([parts, out, n] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            int row = 0;
            for (const auto& p : parts) {
                if (p->requires_grad()) {
                    kernels::active().axpy(1.0, g + static_cast<int64_t>(row) * n, p->grad_ptr(),
                                           p->size());
                }
                row += p->rows();
            }
        });
    }
    return out;
}

TensorPtr slice_rows(Tape* tape, const TensorPtr& a, int r0, int r1) {
    require_2d(a, "slice_rows");
    const int m = a->rows(), n = a->cols();
    if (r0 < 0 || r1 > m || r0 >= r1) {
        throw ShapeError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of range for " + std::to_string(m) + " rows");
    }
    const bool rg = track(tape, {&a});
    auto out = Tensor::zeros({r1 - r0, n}, rg);
    std::memcpy(out->ptr(), a->ptr() + static_cast<int64_t>(r0) * n,
                static_cast<size_t>(out->size()) * sizeof(double));
    if (rg) {
        tape->record([a, out, r0, n] {
            if (!out->has_grad()) return;
            kernels::active().axpy(1.0, out->grad().data(),
                                   a->grad_ptr() + static_cast<int64_t>(r0) * n, out->size());
        });
    }
    return out;
}

TensorPtr slice_cols(Tape* tape, const TensorPtr& a, int c0, int c1) {
    require_2d(a, "slice_cols");
    const int m = a->rows(), n = a->cols();
    if (c0 < 0 || c1 > n || c0 >= c1) {
        throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of range for " + std::to_string(n) + " cols");
    }
    const int w = c1 - c0;
    const bool rg = track(tape, {&a});
    auto out = Tensor::zeros({m, w}, rg);
    for (int i = 0; i < m; ++i) {
        std::memcpy(out->ptr() + static_cast<int64_t>(i) * w,
                    a->ptr() + static_cast<int64_t>(i) * n + c0,
                    static_cast<size_t>(w) * sizeof(double));
    }
    if (rg) {
        tape->record([a, out, c0, m, n, w] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            double* ga = a->grad_ptr();
            for (int i = 0; i < m; ++i) {
                kernels::active().axpy(1.0, g + static_cast<int64_t>(i) * w,
                                       ga + static_cast<int64_t>(i) * n + c0, w);
            }
        });
    }
    return out;
}

TensorPtr concat_cols(Tape* tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of zero parts");
    const int m = parts[0]->rows();
    int n = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (p->rows() != m) throw ShapeError("concat_cols height mismatch");
        n += p->cols();
        rg = rg || (tape != nullptr && p->requires_grad());
    }
    auto out = Tensor::zeros({m, n}, rg);
    int col = 0;
    for (const auto& p : parts) {
        const int w = p->cols();
        for (int i = 0; i < m; ++i) {
            std::memcpy(out->ptr() + static_cast<int64_t>(i) * n + col,
                        p->ptr() + static_cast<int64_t>(i) * w,
                        static_cast<size_t>(w) * sizeof(double));
        }
        col += w;
    }
    if (rg) {
        tape->record([parts, out, m, n] {
            if (!out->has_grad()) return;
            const double* g = out->grad().data();
            int col = 0;
            for (const auto& p : parts) {
                const int w = p->cols();
                if (p->requires_grad()) {
                    double* gp = p->grad_ptr();
                    for (int i = 0; i < m; ++i) {
                        kernels::active().axpy(1.0, g + static_cast<int64_t>(i) * n + col,
                                               gp + static_cast<int64_t>(i) * w, w);
                    }
                }
                col += w;
            }
        });
    }
    return out;
}

TensorPtr reshape(Tape* tape, const TensorPtr& a, Shape shape) {
    if (shape_numel(shape) != a->size()) {
        throw ShapeError("reshape " + shape_str(a->shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    }
    const bool rg = track(tape, {&a});
    auto out = Tensor::zeros(std::move(shape), rg);
    out->data() = a->data();
    if (rg) {
        tape->record([a, out] {
            if (!out->has_grad()) return;
            kernels::active().axpy(1.0, out->grad().data(), a->grad_ptr(), a->size());
        });
    }
    return out;
}

TensorPtr key_alignment_penalty(Tape* tape, const std::vector<TensorPtr>& keys,
                                const std::vector<double>& query, bool raw_gamma) {
    const int d = static_cast<int>(query.size());
    const double qnorm = std::sqrt(kernels::active().dot(query.data(), query.data(), d));
    if (qnorm == 0.0) throw NumericError("key_alignment_penalty: zero-norm query");
    bool rg = false;
    for (const auto& k : keys) {
        if (k->size() != d) {
            throw ShapeError("key length " + std::to_string(k->size()) + " vs query dim " +
                             std::to_string(d));
        }
        rg = rg || (tape != nullptr && k->requires_grad());
    }
    auto out = Tensor::zeros({1}, rg);
    std::vector<double> knorms(keys.size());
    std::vector<double> cosines(keys.size());
    double total = 0.0;
    for (size_t i = 0; i < keys.size(); ++i) {
        const double* kv = keys[i]->ptr();
        const double kn = std::sqrt(kernels::active().dot(kv, kv, d));
        if (kn == 0.0) throw NumericError("key_alignment_penalty: zero-norm key");
        const double cosv = kernels::active().dot(query.data(), kv, d) / (qnorm * kn);
        knorms[i] = kn;
        cosines[i] = cosv;
        total += raw_gamma ? cosv : (1.0 - cosv);
    }
    out->data()[0] = total;
    if (rg) {
        tape->record([keys, query, out, knorms, cosines, qnorm, d, raw_gamma] {
            if (!out->has_grad()) return;
            const double g = out->grad()[0] * (raw_gamma ? 1.0 : -1.0);
            for (size_t i = 0; i < keys.size(); ++i) {
                if (!keys[i]->requires_grad()) continue;
                // d cos / dk = q/(|q||k|) - cos * k/|k|^2
                const double* kv = keys[i]->ptr();
                double* gk = keys[i]->grad_ptr();
                const double a = g / (qnorm * knorms[i]);
                const double b = -g * cosines[i] / (knorms[i] * knorms[i]);
                for (int j = 0; j < d; ++j) gk[j] += a * query[static_cast<size_t>(j)] + b * kv[j];
            }
        });
    }
    return out;
}

}  // namespace ops

TensorPtr finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                     const Tensor& x, double h) {
    auto grad = Tensor::zeros(x.shape());
    Tensor probe = x;
    for (int64_t i = 0; i < x.size(); ++i) {
        const double orig = probe.data()[static_cast<size_t>(i)];
        probe.data()[static_cast<size_t>(i)] = orig + h;
        const double fp = f(probe);
        probe.data()[static_cast<size_t>(i)] = orig - h;
        const double fm = f(probe);
        probe.data()[static_cast<size_t>(i)] = orig;
        grad->data()[static_cast<size_t>(i)] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace peftcl
