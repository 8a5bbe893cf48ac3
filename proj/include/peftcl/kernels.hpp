#pragma once

#include <cstdint>
#include <string>

// Dense double-precision inner loops. Two implementations share one table:
// a scalar reference and an AVX2+FMA variant picked at runtime. Everything
// above this layer calls through kernels::active(), so the two lanes are
// interchangeable and equivalence-tested against each other.

namespace peftcl::kernels {

struct Kernels {
    const char* name;

    // c[m x n] = a[m x k] * b[k x n], row-major; accumulate adds into c
    void (*matmul_nn)(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate);
    // c[m x n] = a[m x k] * bt[n x k]^T
    void (*matmul_nt)(const double* a, const double* bt, double* c, int m, int k, int n,
                      bool accumulate);
    // c[m x n] = at[k x m]^T * b[k x n]
    void (*matmul_tn)(const double* at, const double* b, double* c, int m, int k, int n,
                      bool accumulate);

    void (*axpy)(double alpha, const double* x, double* y, int64_t n);  // y += alpha*x
    void (*scale)(const double* x, double alpha, double* y, int64_t n); // y = alpha*x
    void (*add)(const double* a, const double* b, double* y, int64_t n);
    void (*mul)(const double* a, const double* b, double* y, int64_t n);
    double (*dot)(const double* a, const double* b, int64_t n);
    double (*sum)(const double* x, int64_t n);
};

const Kernels& scalar();
const Kernels* avx2();  // nullptr when the build or CPU lacks AVX2+FMA

bool cpu_has_avx2();

// "auto" | "scalar" | "avx2"; throws ConfigError on unknown or unsupported
void select(const std::string& which);
const Kernels& active();
std::string active_name();

}  // namespace peftcl::kernels
