#include "flgn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace flgn {

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build_loss,
                           const std::vector<Tensor>& params, double h, double tol) {
    if (h <= 0.0) throw PreconditionError("grad_check step size must be positive");
    for (const auto& p : params) zero_grad(p);

    Tape tape;
    Tensor loss = build_loss(tape);
    if (loss->rows != 1 || loss->cols != 1) {
        throw ShapeError("grad_check requires a scalar-valued function");
    }
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p->grad);

    auto eval = [&build_loss]() {
        Tape t(/*recording=*/false);
        return build_loss(t)->data[0];
    };

    GradCheckReport report;
    for (size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double orig = p.data[i];
            p.data[i] = orig + 2.0 * h;
            const double fp2 = eval();
            p.data[i] = orig + h;
            const double fp1 = eval();
            p.data[i] = orig - h;
            const double fm1 = eval();
            p.data[i] = orig - 2.0 * h;
            const double fm2 = eval();
            p.data[i] = orig;
            // Five-point stencil: O(h^4) truncation, so h can sit well above
            // the f64 cancellation floor and still resolve the derivative.
            // Differencing neighbors first keeps the numerator exactly zero
            // for a parameter the loss never reads (all four values bitwise
            // equal); expanding the coefficients instead leaves a rounding
            // residue that 1/(12h) amplifies.
            const double numeric = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h);
            const double ana = analytic[k][i];
            const double denom = std::max({std::fabs(ana), std::fabs(numeric), 1e-12});
            const double rel = std::fabs(ana - numeric) / denom;
            report.max_rel_error = std::max(report.max_rel_error, rel);
        }
    }
    report.pass = report.max_rel_error < tol;
    return report;
}

}  // namespace flgn
