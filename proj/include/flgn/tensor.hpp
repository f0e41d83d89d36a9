#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "flgn/errors.hpp"
#include "flgn/rng.hpp"

namespace flgn {

// Dense rank-2 f64 tensor. Scalars are 1x1, row vectors 1xC. grad is
// allocated (zero-filled) iff requires_grad is set.
struct TensorData {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;

    int64_t size() const { return rows * cols; }
    double& at(int64_t i, int64_t j) { return data[i * cols + j]; }
    double at(int64_t i, int64_t j) const { return data[i * cols + j]; }
};

using Tensor = std::shared_ptr<TensorData>;

Tensor make_tensor(int64_t rows, int64_t cols, double fill = 0.0);
Tensor make_tensor(int64_t rows, int64_t cols, std::initializer_list<double> values);
Tensor make_tensor(int64_t rows, int64_t cols, const std::vector<double>& values);
// Gaussian init scaled by `scale`; pass requires_grad for trainable parameters.
Tensor make_randn(int64_t rows, int64_t cols, double scale, RngStream& rng,
                  bool requires_grad = false);
Tensor make_param(int64_t rows, int64_t cols, double fill = 0.0);
// Value copy with requires_grad cleared; never aliases the source buffer.
Tensor clone_values(const Tensor& t);
void zero_grad(const Tensor& t);
bool same_shape(const Tensor& a, const Tensor& b);

// Define-by-run reverse-mode tape. Ops validate shapes, compute the forward
// value, verify every output element is finite (NumericsError otherwise) and,
// while recording, push a backward closure. backward() may run once; a second
// call on the same tape is an error. Gradients from multiple consumers of a
// tensor accumulate by summation.
class Tape {
  public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    Tensor matmul(const Tensor& a, const Tensor& b);
    // a[m x k] * b[n x k]^T -> [m x n]
    Tensor matmul_nt(const Tensor& a, const Tensor& b);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double s);
    Tensor add_scalar(const Tensor& a, double c);
    Tensor silu(const Tensor& a);
    // Row-wise normalization to zero mean / unit variance, eps stabilizer.
    Tensor layer_norm(const Tensor& a, double eps = 1e-6);
    // Row-wise softmax with per-row max subtraction.
    Tensor softmax(const Tensor& a);
    // [1 x C] -> [rows x C]; backward sums over the repeated rows.
    Tensor repeat_row(const Tensor& a, int64_t rows);
    // [R x C] -> [1 x C] copy of row idx; backward routes into that row.
    Tensor select_row(const Tensor& a, int64_t idx);
    // Columns [c0, c1) of a.
    Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1);
    Tensor concat_cols(const Tensor& a, const Tensor& b);
    // Mean of squared differences over all elements; gradient flows into
    // pred only, target is treated as constant.
    Tensor mse_loss(const Tensor& pred, const Tensor& target);
    // 0.5 * sum((a-b)^2) over all elements, no mean: d/da == (a - b) exactly.
    Tensor half_sum_sq_diff(const Tensor& a, const Tensor& b);
    Tensor sum(const Tensor& a);
    // Value copy cut off from the graph (stop-gradient).
    Tensor detach(const Tensor& a);

    void backward(const Tensor& loss);

  private:
    Tensor result(int64_t rows, int64_t cols, const char* op,
                  std::initializer_list<Tensor> inputs);
    void record(std::function<void()> fn);
    static void check_finite(const Tensor& t, const char* op);

    std::vector<std::function<void()>> nodes_;
    bool recording_ = true;
    bool consumed_ = false;
};

}  // namespace flgn
