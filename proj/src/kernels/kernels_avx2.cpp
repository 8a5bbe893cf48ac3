#include "peftcl/kernels.hpp"

// AVX2+FMA lane, 4 doubles per vector. Unaligned loads throughout; gelu and
// other transcendental ops stay scalar (std::erf has no vector counterpart
// and the gradient oracle depends on its exactness).

#if defined(PEFTCL_HAVE_AVX2)

#include <immintrin.h>

namespace peftcl::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

void matmul_nn_avx2(const double* a, const double* b, double* c, int m, int k, int n,
                    bool accumulate) {
    const int n4 = n & ~3;
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<int64_t>(i) * n;
        if (!accumulate) {
            int j = 0;
            const __m256d z = _mm256_setzero_pd();
            for (; j < n4; j += 4) _mm256_storeu_pd(crow + j, z);
            for (; j < n; ++j) crow[j] = 0.0;
        }
        const double* arow = a + static_cast<int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const __m256d avv = _mm256_set1_pd(av);
            const double* brow = b + static_cast<int64_t>(p) * n;
            int j = 0;
            for (; j < n4; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(avv, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt_avx2(const double* a, const double* bt, double* c, int m, int k, int n,
                    bool accumulate) {
    const int k4 = k & ~3;
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<int64_t>(i) * k;
        double* crow = c + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = bt + static_cast<int64_t>(j) * k;
            __m256d acc = _mm256_setzero_pd();
            int p = 0;
            for (; p < k4; p += 4) {
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), acc);
            }
            double s = hsum(acc);
            for (; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

void matmul_tn_avx2(const double* at, const double* b, double* c, int m, int k, int n,
                    bool accumulate) {
    if (!accumulate) {
        const int64_t total = static_cast<int64_t>(m) * n;
        int64_t i = 0;
        const __m256d z = _mm256_setzero_pd();
        for (; i + 4 <= total; i += 4) _mm256_storeu_pd(c + i, z);
        for (; i < total; ++i) c[i] = 0.0;
    }
    const int n4 = n & ~3;
    for (int p = 0; p < k; ++p) {
        const double* atrow = at + static_cast<int64_t>(p) * m;
        const double* brow = b + static_cast<int64_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = atrow[i];
            const __m256d avv = _mm256_set1_pd(av);
            double* crow = c + static_cast<int64_t>(i) * n;
            int j = 0;
            for (; j < n4; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(avv, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void axpy_avx2(double alpha, const double* x, double* y, int64_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(const double* x, double alpha, double* y, int64_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) y[i] = alpha * x[i];
}

void add_avx2(const double* a, const double* b, double* y, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void mul_avx2(const double* a, const double* b, double* y, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

double dot_avx2(const double* a, const double* b, int64_t n) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_avx2(const double* x, int64_t n) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

}  // namespace

const Kernels* avx2() {
    static const Kernels table = {
        "avx2",     matmul_nn_avx2, matmul_nt_avx2, matmul_tn_avx2, axpy_avx2,
        scale_avx2, add_avx2,       mul_avx2,       dot_avx2,       sum_avx2,
    };
    return &table;
}

}  // namespace peftcl::kernels

#else

namespace peftcl::kernels {
const Kernels* avx2() { return nullptr; }
}  // namespace peftcl::kernels

#endif
