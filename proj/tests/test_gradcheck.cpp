#include <cmath>

#include "doctest.h"
#include "flgn/gradcheck.hpp"
#include "flgn/tensor.hpp"

using namespace flgn;

TEST_SUITE("gradcheck") {

TEST_CASE("linear function is exact to rounding") {
    auto w = make_param(1, 1, 0.8);
    auto build = [&](Tape& tape) { return tape.scale(w, 3.0); };
    auto r = grad_check(build, {w});
    CHECK(r.pass);
    CHECK(r.max_rel_error < 1e-10);
}

TEST_CASE("cubic at w=2 stays under the finite-difference bound") {
    auto w = make_param(1, 1, 2.0);
    auto build = [&](Tape& tape) { return tape.mul(tape.mul(w, w), w); };
    // analytic 3w^2 = 12; central differences at h=1e-5 carry an O(h^2) bias
    auto r = grad_check(build, {w}, 1e-5, 1e-6);
    CHECK(r.pass);
    CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("a corrupted gradient is flagged") {
    // The recorded (analytic) pass sees a doubled loss, the value-only
    // evaluations see the true one, so the analytic gradient is 2x off.
    auto w = make_param(1, 1, 1.3);
    auto build = [&](Tape& tape) -> Tensor {
        auto cube = tape.mul(tape.mul(w, w), w);
        return tape.recording() ? tape.scale(cube, 2.0) : cube;
    };
    auto r = grad_check(build, {w});
    CHECK(!r.pass);
    CHECK(r.max_rel_error > 0.4);
}

TEST_CASE("rejects non-scalar outputs") {
    auto w = make_param(1, 2, 1.0);
    auto build = [&](Tape& tape) { return tape.add(w, w); };
    CHECK_THROWS(grad_check(build, {w}));
}

TEST_CASE("multiple parameters are all probed") {
    auto a = make_param(1, 1, 0.4);
    auto b = make_param(1, 1, -0.9);
    auto build = [&](Tape& tape) { return tape.mul(a, tape.silu(b)); };
    auto r = grad_check(build, {a, b}, 1e-5, 1e-6);
    CHECK(r.pass);
}

}  // TEST_SUITE
