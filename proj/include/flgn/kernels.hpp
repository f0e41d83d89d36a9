#pragma once

#include <cstdint>

// Dense f64 kernels. Every kernel has a serial reference implementation and
// an OpenMP variant; the unsuffixed entry points dispatch on problem size.
// Parallelization is only ever over independent output elements or rows with
// a fixed serial accumulation order inside each, so serial and parallel
// results are bit-identical (see tests/test_kernels.cpp and tools/bench_kernels.cpp).

namespace flgn::kern {

// Thread budget. 0 = use the OpenMP default. Values <= 1 force serial paths.
void set_max_threads(int n);
int max_threads();

// Work (in multiply-adds or elements) below which dispatch stays serial.
inline constexpr int64_t kMinParallelWork = 1 << 16;

// C[m x n] = A[m x k] * B[k x n], row-major. acc=true adds into C.
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
            bool acc = false);
void matmul_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                   bool acc = false);
void matmul_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                bool acc = false);

// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool acc = false);
void matmul_nt_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                      bool acc = false);
void matmul_nt_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                   bool acc = false);

// C[k x n] = A[m x k]^T * B[m x n]
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool acc = false);
void matmul_tn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                      bool acc = false);
void matmul_tn_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                   bool acc = false);

enum class BinOp { Add, Sub, Mul };

void ew_binary(BinOp op, const double* a, const double* b, double* out, int64_t n);
void ew_binary_serial(BinOp op, const double* a, const double* b, double* out, int64_t n);
void ew_binary_omp(BinOp op, const double* a, const double* b, double* out, int64_t n);

// out = a * s + c (c may be 0)
void ew_affine(const double* a, double s, double c, double* out, int64_t n);

// out += a * s
void axpy(const double* a, double s, double* out, int64_t n);

void silu(const double* x, double* out, int64_t n);
void silu_serial(const double* x, double* out, int64_t n);
void silu_omp(const double* x, double* out, int64_t n);
// dx += dy * silu'(x)
void silu_backward(const double* x, const double* dy, double* dx, int64_t n);

// Row-wise softmax with per-row max subtraction.
void softmax_rows(const double* x, double* out, int64_t rows, int64_t cols);
void softmax_rows_serial(const double* x, double* out, int64_t rows, int64_t cols);
void softmax_rows_omp(const double* x, double* out, int64_t rows, int64_t cols);
// dx += (dy - sum(dy*y)) * y, row-wise; y is the forward output.
void softmax_rows_backward(const double* y, const double* dy, double* dx, int64_t rows,
                           int64_t cols);

// Row-wise layer norm, eps stabilizer; saves mean and 1/std per row.
void layer_norm_rows(const double* x, double* out, double* mean, double* rstd, int64_t rows,
                     int64_t cols, double eps);
void layer_norm_rows_serial(const double* x, double* out, double* mean, double* rstd, int64_t rows,
                            int64_t cols, double eps);
void layer_norm_rows_omp(const double* x, double* out, double* mean, double* rstd, int64_t rows,
                         int64_t cols, double eps);
void layer_norm_rows_backward(const double* x, const double* dy, const double* mean,
                              const double* rstd, double* dx, int64_t rows, int64_t cols);

// Reductions are always serial so that every code path sums in index order.
double sum(const double* x, int64_t n);
double sum_sq_diff(const double* a, const double* b, int64_t n);
double sum_abs(const double* x, int64_t n);
bool all_finite(const double* x, int64_t n);

}  // namespace flgn::kern
