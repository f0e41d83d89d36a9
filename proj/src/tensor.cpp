#include "flgn/tensor.hpp"

#include <cmath>
#include <string>

#include "flgn/kernels.hpp"

namespace flgn {

namespace {

Tensor alloc(int64_t rows, int64_t cols) {
    if (rows <= 0 || cols <= 0) {
        throw ShapeError("tensor dimensions must be positive, got " + std::to_string(rows) +
                         "x" + std::to_string(cols));
    }
    auto t = std::make_shared<TensorData>();
    t->rows = rows;
    t->cols = cols;
    t->data.assign(static_cast<size_t>(rows * cols), 0.0);
    return t;
}

std::string shape_str(const Tensor& t) {
    return std::to_string(t->rows) + "x" + std::to_string(t->cols);
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
}

}  // namespace

Tensor make_tensor(int64_t rows, int64_t cols, double fill) {
    auto t = alloc(rows, cols);
    if (fill != 0.0) t->data.assign(t->data.size(), fill);
    return t;
}

Tensor make_tensor(int64_t rows, int64_t cols, std::initializer_list<double> values) {
    return make_tensor(rows, cols, std::vector<double>(values));
}

Tensor make_tensor(int64_t rows, int64_t cols, const std::vector<double>& values) {
    auto t = alloc(rows, cols);
    if (static_cast<int64_t>(values.size()) != t->size()) {
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not fill a " + shape_str(t) + " tensor");
    }
    t->data = values;
    return t;
}

Tensor make_randn(int64_t rows, int64_t cols, double scale, RngStream& rng, bool requires_grad) {
    auto t = alloc(rows, cols);
    for (auto& v : t->data) v = scale * rng.normal();
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->data.size(), 0.0);
    return t;
}

Tensor make_param(int64_t rows, int64_t cols, double fill) {
    auto t = make_tensor(rows, cols, fill);
    t->requires_grad = true;
    t->grad.assign(t->data.size(), 0.0);
    return t;
}

Tensor clone_values(const Tensor& t) {
    auto c = alloc(t->rows, t->cols);
    c->data = t->data;
    return c;
}

void zero_grad(const Tensor& t) {
    if (t->requires_grad) t->grad.assign(t->data.size(), 0.0);
}

bool same_shape(const Tensor& a, const Tensor& b) {
    return a->rows == b->rows && a->cols == b->cols;
}

void Tape::check_finite(const Tensor& t, const char* op) {
    if (!kern::all_finite(t->data.data(), t->size())) {
        throw NumericsError(std::string("non-finite values produced by ") + op);
    }
}

Tensor Tape::result(int64_t rows, int64_t cols, const char* op,
                    std::initializer_list<Tensor> inputs) {
    auto out = alloc(rows, cols);
    if (recording_) {
        for (const auto& in : inputs) {
            if (in->requires_grad) {
                out->requires_grad = true;
                out->grad.assign(out->data.size(), 0.0);
                break;
            }
        }
    }
    (void)op;
    return out;
}

void Tape::record(std::function<void()> fn) {
    if (recording_) nodes_.push_back(std::move(fn));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a->cols != b->rows) shape_fail("matmul", a, b);
    auto out = result(a->rows, b->cols, "matmul", {a, b});
    kern::matmul(a->data.data(), b->data.data(), out->data.data(), a->rows, a->cols, b->cols);
    check_finite(out, "matmul");
    if (out->requires_grad) {
        record([a, b, out] {
            // dA += dC * B^T, dB += A^T * dC
            if (a->requires_grad) {
                kern::matmul_nt(out->grad.data(), b->data.data(), a->grad.data(), out->rows,
                                out->cols, b->rows, /*acc=*/true);
            }
            if (b->requires_grad) {
                kern::matmul_tn(a->data.data(), out->grad.data(), b->grad.data(), a->rows,
                                a->cols, out->cols, /*acc=*/true);
            }
        });
    }
    return out;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
    if (a->cols != b->cols) shape_fail("matmul_nt", a, b);
    auto out = result(a->rows, b->rows, "matmul_nt", {a, b});
    kern::matmul_nt(a->data.data(), b->data.data(), out->data.data(), a->rows, a->cols, b->rows);
    check_finite(out, "matmul_nt");
    if (out->requires_grad) {
        record([a, b, out] {
            // C = A * B^T: dA += dC * B, dB += dC^T * A
            if (a->requires_grad) {
                kern::matmul(out->grad.data(), b->data.data(), a->grad.data(), out->rows,
                             out->cols, b->cols, /*acc=*/true);
            }
            if (b->requires_grad) {
                kern::matmul_tn(out->grad.data(), a->data.data(), b->grad.data(), out->rows,
                                out->cols, a->cols, /*acc=*/true);
            }
        });
    }
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) shape_fail("add", a, b);
    auto out = result(a->rows, a->cols, "add", {a, b});
    kern::ew_binary(kern::BinOp::Add, a->data.data(), b->data.data(), out->data.data(),
                    out->size());
    check_finite(out, "add");
    if (out->requires_grad) {
        record([a, b, out] {
            const int64_t n = out->size();
            if (a->requires_grad) kern::axpy(out->grad.data(), 1.0, a->grad.data(), n);
            if (b->requires_grad) kern::axpy(out->grad.data(), 1.0, b->grad.data(), n);
        });
    }
    return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) shape_fail("sub", a, b);
    auto out = result(a->rows, a->cols, "sub", {a, b});
    kern::ew_binary(kern::BinOp::Sub, a->data.data(), b->data.data(), out->data.data(),
                    out->size());
    check_finite(out, "sub");
    if (out->requires_grad) {
        record([a, b, out] {
            const int64_t n = out->size();
            if (a->requires_grad) kern::axpy(out->grad.data(), 1.0, a->grad.data(), n);
            if (b->requires_grad) kern::axpy(out->grad.data(), -1.0, b->grad.data(), n);
        });
    }
    return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) shape_fail("mul", a, b);
    auto out = result(a->rows, a->cols, "mul", {a, b});
    kern::ew_binary(kern::BinOp::Mul, a->data.data(), b->data.data(), out->data.data(),
                    out->size());
    check_finite(out, "mul");
    if (out->requires_grad) {
        record([a, b, out] {
            const int64_t n = out->size();
            if (a->requires_grad) {
                for (int64_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                for (int64_t i = 0; i < n; ++i) b->grad[i] += out->grad[i] * a->data[i];
            }
        });
    }
    return out;
}

Tensor Tape::scale(const Tensor& a, double s) {
    auto out = result(a->rows, a->cols, "scale", {a});
    kern::ew_affine(a->data.data(), s, 0.0, out->data.data(), out->size());
    check_finite(out, "scale");
    if (out->requires_grad) {
        record([a, out, s] {
            if (a->requires_grad) kern::axpy(out->grad.data(), s, a->grad.data(), out->size());
        });
    }
    return out;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
    auto out = result(a->rows, a->cols, "add_scalar", {a});
    kern::ew_affine(a->data.data(), 1.0, c, out->data.data(), out->size());
    check_finite(out, "add_scalar");
    if (out->requires_grad) {
        record([a, out] {
            if (a->requires_grad) kern::axpy(out->grad.data(), 1.0, a->grad.data(), out->size());
        });
    }
    return out;
}

Tensor Tape::silu(const Tensor& a) {
    auto out = result(a->rows, a->cols, "silu", {a});
    kern::silu(a->data.data(), out->data.data(), out->size());
    check_finite(out, "silu");
    if (out->requires_grad) {
        record([a, out] {
            if (a->requires_grad) {
                kern::silu_backward(a->data.data(), out->grad.data(), a->grad.data(),
                                    out->size());
            }
        });
    }
    return out;
}

Tensor Tape::layer_norm(const Tensor& a, double eps) {
    auto out = result(a->rows, a->cols, "layer_norm", {a});
    auto mean = std::make_shared<std::vector<double>>(a->rows, 0.0);
    auto rstd = std::make_shared<std::vector<double>>(a->rows, 0.0);
    kern::layer_norm_rows(a->data.data(), out->data.data(), mean->data(), rstd->data(), a->rows,
                          a->cols, eps);
    check_finite(out, "layer_norm");
    if (out->requires_grad) {
        record([a, out, mean, rstd] {
            if (a->requires_grad) {
                kern::layer_norm_rows_backward(a->data.data(), out->grad.data(), mean->data(),
                                               rstd->data(), a->grad.data(), a->rows, a->cols);
            }
        });
    }
    return out;
}

Tensor Tape::softmax(const Tensor& a) {
    auto out = result(a->rows, a->cols, "softmax", {a});
    kern::softmax_rows(a->data.data(), out->data.data(), a->rows, a->cols);
    check_finite(out, "softmax");
    if (out->requires_grad) {
        record([a, out] {
            if (a->requires_grad) {
                kern::softmax_rows_backward(out->data.data(), out->grad.data(), a->grad.data(),
                                            a->rows, a->cols);
            }
        });
    }
    return out;
}

Tensor Tape::repeat_row(const Tensor& a, int64_t rows) {
    if (a->rows != 1) {
        throw ShapeError("repeat_row expects a 1xC tensor, got " + shape_str(a));
    }
    if (rows < 1) throw ShapeError("repeat_row: row count must be >= 1");
    auto out = result(rows, a->cols, "repeat_row", {a});
    for (int64_t i = 0; i < rows; ++i) {
        std::copy(a->data.begin(), a->data.end(), out->data.begin() + i * a->cols);
    }
    check_finite(out, "repeat_row");
    if (out->requires_grad) {
        record([a, out] {
            if (!a->requires_grad) return;
            for (int64_t i = 0; i < out->rows; ++i) {
                for (int64_t j = 0; j < out->cols; ++j) {
                    a->grad[j] += out->grad[i * out->cols + j];
                }
            }
        });
    }
    return out;
}

Tensor Tape::select_row(const Tensor& a, int64_t idx) {
    if (idx < 0 || idx >= a->rows) {
        throw ShapeError("select_row: index " + std::to_string(idx) + " out of range for " +
                         shape_str(a));
    }
    auto out = result(1, a->cols, "select_row", {a});
    std::copy(a->data.begin() + idx * a->cols, a->data.begin() + (idx + 1) * a->cols,
              out->data.begin());
    check_finite(out, "select_row");
    if (out->requires_grad) {
        record([a, out, idx] {
            if (!a->requires_grad) return;
            for (int64_t j = 0; j < out->cols; ++j) a->grad[idx * a->cols + j] += out->grad[j];
        });
    }
    return out;
}

Tensor Tape::slice_cols(const Tensor& a, int64_t c0, int64_t c1) {
    if (c0 < 0 || c1 > a->cols || c0 >= c1) {
        throw ShapeError("slice_cols: invalid range [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") for " + shape_str(a));
    }
    auto out = result(a->rows, c1 - c0, "slice_cols", {a});
    for (int64_t i = 0; i < a->rows; ++i) {
        std::copy(a->data.begin() + i * a->cols + c0, a->data.begin() + i * a->cols + c1,
                  out->data.begin() + i * out->cols);
    }
    check_finite(out, "slice_cols");
    if (out->requires_grad) {
        record([a, out, c0] {
            if (!a->requires_grad) return;
            for (int64_t i = 0; i < out->rows; ++i) {
                for (int64_t j = 0; j < out->cols; ++j) {
                    a->grad[i * a->cols + c0 + j] += out->grad[i * out->cols + j];
                }
            }
        });
    }
    return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
    if (a->rows != b->rows) shape_fail("concat_cols", a, b);
    auto out = result(a->rows, a->cols + b->cols, "concat_cols", {a, b});
    for (int64_t i = 0; i < a->rows; ++i) {
        std::copy(a->data.begin() + i * a->cols, a->data.begin() + (i + 1) * a->cols,
                  out->data.begin() + i * out->cols);
        std::copy(b->data.begin() + i * b->cols, b->data.begin() + (i + 1) * b->cols,
                  out->data.begin() + i * out->cols + a->cols);
    }
    check_finite(out, "concat_cols");
    if (out->requires_grad) {
        record([a, b, out] {
            for (int64_t i = 0; i < out->rows; ++i) {
                if (a->requires_grad) {
                    for (int64_t j = 0; j < a->cols; ++j) {
                        a->grad[i * a->cols + j] += out->grad[i * out->cols + j];
                    }
                }
                if (b->requires_grad) {
                    for (int64_t j = 0; j < b->cols; ++j) {
                        b->grad[i * b->cols + j] += out->grad[i * out->cols + a->cols + j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor Tape::mse_loss(const Tensor& pred, const Tensor& target) {
    if (!same_shape(pred, target)) shape_fail("mse_loss", pred, target);
    auto out = result(1, 1, "mse_loss", {pred});
    const int64_t n = pred->size();
    out->data[0] = kern::sum_sq_diff(pred->data.data(), target->data.data(), n) /
                   static_cast<double>(n);
    check_finite(out, "mse_loss");
    if (out->requires_grad) {
        record([pred, target, out, n] {
            if (!pred->requires_grad) return;
            const double c = out->grad[0] * 2.0 / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i) {
                pred->grad[i] += c * (pred->data[i] - target->data[i]);
            }
        });
    }
    return out;
}

Tensor Tape::half_sum_sq_diff(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) shape_fail("half_sum_sq_diff", a, b);
    auto out = result(1, 1, "half_sum_sq_diff", {a, b});
    const int64_t n = a->size();
    out->data[0] = 0.5 * kern::sum_sq_diff(a->data.data(), b->data.data(), n);
    check_finite(out, "half_sum_sq_diff");
    if (out->requires_grad) {
        record([a, b, out, n] {
            const double g = out->grad[0];
            for (int64_t i = 0; i < n; ++i) {
                const double d = a->data[i] - b->data[i];
                if (a->requires_grad) a->grad[i] += g * d;
                if (b->requires_grad) b->grad[i] -= g * d;
            }
        });
    }
    return out;
}

Tensor Tape::sum(const Tensor& a) {
    auto out = result(1, 1, "sum", {a});
    out->data[0] = kern::sum(a->data.data(), a->size());
    check_finite(out, "sum");
    if (out->requires_grad) {
        record([a, out] {
            if (!a->requires_grad) return;
            const double g = out->grad[0];
            for (int64_t i = 0; i < a->size(); ++i) a->grad[i] += g;
        });
    }
    return out;
}

Tensor Tape::detach(const Tensor& a) { return clone_values(a); }

void Tape::backward(const Tensor& loss) {
    if (loss->rows != 1 || loss->cols != 1) {
        throw ShapeError("backward requires a scalar loss, got " + shape_str(loss));
    }
    if (consumed_) throw PreconditionError("tape already consumed by a previous backward");
    consumed_ = true;
    if (loss->requires_grad) loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
}

}  // namespace flgn
