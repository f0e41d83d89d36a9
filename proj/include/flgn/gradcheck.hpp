#pragma once

#include <functional>
#include <vector>

#include "flgn/tensor.hpp"

namespace flgn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool pass = false;
};

// Compares the tape gradient of a scalar-valued function against a five-point
// central-difference stencil over every element of every parameter. build_loss
// must rebuild the loss from the parameters' current values on the tape it is
// given; it is called once recording and four times per element value-only.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-12). The
// O(h^4) truncation lets the default step sit far above the cancellation
// floor, keeping both error sources orders of magnitude under the tolerance
// for losses of order one.
// The function actually evaluated must be differentiable in every parameter:
// any stop-gradient inside it has to be frozen to constants by the caller,
// or the probes will differentiate through the detached path.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build_loss,
                           const std::vector<Tensor>& params, double h = 4e-3,
                           double tol = 1e-5);

}  // namespace flgn
