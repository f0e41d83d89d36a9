#include "flgn/kernels.hpp"

#include <cmath>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flgn::kern {

namespace {

int g_max_threads = 0;  // 0 = library default

int effective_threads() {
#ifdef _OPENMP
    if (g_max_threads > 0) return g_max_threads;
    return omp_get_max_threads();
#else
    return 1;
#endif
}

bool go_parallel(int64_t work) { return effective_threads() > 1 && work >= kMinParallelWork; }

}  // namespace

void set_max_threads(int n) { g_max_threads = n; }
int max_threads() { return effective_threads(); }

// ---------------------------------------------------------------- matmul

void matmul_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                   bool acc) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        if (!acc) {
            for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        // ikj order: stream through B rows, accumulate into the C row.
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                bool acc) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int64_t i = 0; i < m; ++i) {
        matmul_serial(a + i * k, b, c + i * n, 1, k, n, acc);
    }
}

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
            bool acc) {
    if (go_parallel(m * k * n)) {
        matmul_omp(a, b, c, m, k, n, acc);
    } else {
        matmul_serial(a, b, c, m, k, n, acc);
    }
}

void matmul_nt_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                      bool acc) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

void matmul_nt_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                   bool acc) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int64_t i = 0; i < m; ++i) {
        matmul_nt_serial(a + i * k, b, c + i * n, 1, k, n, acc);
    }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool acc) {
    if (go_parallel(m * k * n)) {
        matmul_nt_omp(a, b, c, m, k, n, acc);
    } else {
        matmul_nt_serial(a, b, c, m, k, n, acc);
    }
}

void matmul_tn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                      bool acc) {
    if (!acc) {
        for (int64_t i = 0; i < k * n; ++i) c[i] = 0.0;
    }
    for (int64_t p = 0; p < m; ++p) {
        const double* arow = a + p * k;
        const double* brow = b + p * n;
        for (int64_t i = 0; i < k; ++i) {
            const double av = arow[i];
            double* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_tn_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                   bool acc) {
    // Parallel over output rows i (a column of A); the reduction over p stays
    // serial per row, matching the serial kernel's accumulation order.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int64_t i = 0; i < k; ++i) {
        double* crow = c + i * n;
        if (!acc) {
            for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        for (int64_t p = 0; p < m; ++p) {
            const double av = a[p * k + i];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool acc) {
    if (go_parallel(m * k * n)) {
        matmul_tn_omp(a, b, c, m, k, n, acc);
    } else {
        matmul_tn_serial(a, b, c, m, k, n, acc);
    }
}

// ------------------------------------------------------------ elementwise

void ew_binary_serial(BinOp op, const double* a, const double* b, double* out, int64_t n) {
    switch (op) {
        case BinOp::Add:
            for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
            break;
        case BinOp::Sub:
            for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
            break;
        case BinOp::Mul:
            for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
            break;
    }
}

void ew_binary_omp(BinOp op, const double* a, const double* b, double* out, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel num_threads(effective_threads())
    {
        const int nt = omp_get_num_threads();
        const int id = omp_get_thread_num();
        const int64_t chunk = (n + nt - 1) / nt;
        const int64_t lo = id * chunk;
        const int64_t hi = lo + chunk < n ? lo + chunk : n;
        if (lo < hi) ew_binary_serial(op, a + lo, b + lo, out + lo, hi - lo);
    }
#else
    ew_binary_serial(op, a, b, out, n);
#endif
}

void ew_binary(BinOp op, const double* a, const double* b, double* out, int64_t n) {
    if (go_parallel(n)) {
        ew_binary_omp(op, a, b, out, n);
    } else {
        ew_binary_serial(op, a, b, out, n);
    }
}

void ew_affine(const double* a, double s, double c, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * s + c;
}

void axpy(const double* a, double s, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] += a[i] * s;
}

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

void silu_serial(const double* x, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] * sigmoid(x[i]);
}

void silu_omp(const double* x, double* out, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] * sigmoid(x[i]);
}

void silu(const double* x, double* out, int64_t n) {
    if (go_parallel(n * 4)) {
        silu_omp(x, out, n);
    } else {
        silu_serial(x, out, n);
    }
}

void silu_backward(const double* x, const double* dy, double* dx, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        const double s = sigmoid(x[i]);
        dx[i] += dy[i] * (s + x[i] * s * (1.0 - s));
    }
}

// ---------------------------------------------------------------- rowwise

namespace {

void softmax_row(const double* x, double* out, int64_t cols) {
    double mx = x[0];
    for (int64_t j = 1; j < cols; ++j) mx = x[j] > mx ? x[j] : mx;
    double denom = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
        out[j] = std::exp(x[j] - mx);
        denom += out[j];
    }
    const double inv = 1.0 / denom;
    for (int64_t j = 0; j < cols; ++j) out[j] *= inv;
}

void layer_norm_row(const double* x, double* out, double* mean, double* rstd, int64_t cols,
                    double eps) {
    double mu = 0.0;
    for (int64_t j = 0; j < cols; ++j) mu += x[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
        const double d = x[j] - mu;
        var += d * d;
    }
    var /= static_cast<double>(cols);
    const double rs = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < cols; ++j) out[j] = (x[j] - mu) * rs;
    *mean = mu;
    *rstd = rs;
}

}  // namespace

void softmax_rows_serial(const double* x, double* out, int64_t rows, int64_t cols) {
    for (int64_t i = 0; i < rows; ++i) softmax_row(x + i * cols, out + i * cols, cols);
}

void softmax_rows_omp(const double* x, double* out, int64_t rows, int64_t cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int64_t i = 0; i < rows; ++i) softmax_row(x + i * cols, out + i * cols, cols);
}

void softmax_rows(const double* x, double* out, int64_t rows, int64_t cols) {
    if (go_parallel(rows * cols * 4)) {
        softmax_rows_omp(x, out, rows, cols);
    } else {
        softmax_rows_serial(x, out, rows, cols);
    }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, int64_t rows,
                           int64_t cols) {
    for (int64_t i = 0; i < rows; ++i) {
        const double* yr = y + i * cols;
        const double* dyr = dy + i * cols;
        double* dxr = dx + i * cols;
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
        for (int64_t j = 0; j < cols; ++j) dxr[j] += (dyr[j] - dot) * yr[j];
    }
}

void layer_norm_rows_serial(const double* x, double* out, double* mean, double* rstd, int64_t rows,
                            int64_t cols, double eps) {
    for (int64_t i = 0; i < rows; ++i) {
        layer_norm_row(x + i * cols, out + i * cols, mean + i, rstd + i, cols, eps);
    }
}

void layer_norm_rows_omp(const double* x, double* out, double* mean, double* rstd, int64_t rows,
                         int64_t cols, double eps) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int64_t i = 0; i < rows; ++i) {
        layer_norm_row(x + i * cols, out + i * cols, mean + i, rstd + i, cols, eps);
    }
}

void layer_norm_rows(const double* x, double* out, double* mean, double* rstd, int64_t rows,
                     int64_t cols, double eps) {
    if (go_parallel(rows * cols * 4)) {
        layer_norm_rows_omp(x, out, mean, rstd, rows, cols, eps);
    } else {
        layer_norm_rows_serial(x, out, mean, rstd, rows, cols, eps);
    }
}

void layer_norm_rows_backward(const double* x, const double* dy, const double* mean,
                              const double* rstd, double* dx, int64_t rows, int64_t cols) {
    const double inv_n = 1.0 / static_cast<double>(cols);
    for (int64_t i = 0; i < rows; ++i) {
        const double* xr = x + i * cols;
        const double* dyr = dy + i * cols;
        double* dxr = dx + i * cols;
        const double mu = mean[i];
        const double rs = rstd[i];
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            const double xhat = (xr[j] - mu) * rs;
            sum_dy += dyr[j];
            sum_dy_xhat += dyr[j] * xhat;
        }
        for (int64_t j = 0; j < cols; ++j) {
            const double xhat = (xr[j] - mu) * rs;
            dxr[j] += rs * (dyr[j] - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
        }
    }
}

// -------------------------------------------------------------- reductions

double sum(const double* x, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

double sum_sq_diff(const double* a, const double* b, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double sum_abs(const double* x, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::fabs(x[i]);
    return s;
}

bool all_finite(const double* x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

}  // namespace flgn::kern
