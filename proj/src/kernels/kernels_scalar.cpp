#include "peftcl/kernels.hpp"

// Reference lane. Plain loops, sequential accumulation; the SIMD lane is
// checked against these results in tests/test_kernels.cpp.

namespace peftcl::kernels {
namespace {

void matmul_nn_scalar(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<int64_t>(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = 0.0;
        }
        const double* arow = a + static_cast<int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt_scalar(const double* a, const double* bt, double* c, int m, int k, int n,
                      bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<int64_t>(i) * k;
        double* crow = c + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = bt + static_cast<int64_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void matmul_tn_scalar(const double* at, const double* b, double* c, int m, int k, int n,
                      bool accumulate) {
    if (!accumulate) {
        for (int64_t i = 0; i < static_cast<int64_t>(m) * n; ++i) c[i] = 0.0;
    }
    for (int p = 0; p < k; ++p) {
        const double* atrow = at + static_cast<int64_t>(p) * m;
        const double* brow = b + static_cast<int64_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = atrow[i];
            double* crow = c + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void axpy_scalar(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(const double* x, double alpha, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void add_scalar(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void mul_scalar(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

double dot_scalar(const double* a, const double* b, int64_t n) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_scalar(const double* x, int64_t n) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

}  // namespace

const Kernels& scalar() {
    static const Kernels table = {
        "scalar",        matmul_nn_scalar, matmul_nt_scalar, matmul_tn_scalar,
        axpy_scalar,     scale_scalar,     add_scalar,       mul_scalar,
        dot_scalar,      sum_scalar,
    };
    return table;
}

}  // namespace peftcl::kernels
