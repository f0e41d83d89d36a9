#include <cmath>
#include <vector>

#include "doctest.h"
#include "flgn/optim.hpp"
#include "flgn/tensor.hpp"

using namespace flgn;

TEST_SUITE("optim") {

TEST_CASE("single step matches the decoupled-adam arithmetic") {
    // p=1, g=0.5, lr=0.1, betas (0.9, 0.999), eps 1e-8, wd 0:
    // m_hat = 0.5, v_hat = 0.25, p' = 1 - 0.1*0.5/(0.5 + 1e-8).
    auto p = make_param(1, 1, 1.0);
    p->grad[0] = 0.5;
    AdamWConfig cfg;
    cfg.lr = 0.1;
    AdamW opt({p}, cfg);
    opt.step();
    CHECK(p->data[0] == doctest::Approx(0.90000000199999997).epsilon(1e-15));
    CHECK(opt.step_count() == 1);

    // second step, same gradient (moments now warm)
    p->grad[0] = 0.5;
    opt.step();
    CHECK(p->data[0] == doctest::Approx(0.8000000040000006).epsilon(1e-14));
    CHECK(opt.step_count() == 2);
}

TEST_CASE("zero gradient with zero weight decay is a bitwise no-op") {
    auto p = make_param(2, 3, 1.7);
    const std::vector<double> before = p->data;
    AdamW opt({p}, AdamWConfig{});
    opt.step();
    CHECK(p->data == before);
}

TEST_CASE("weight decay shrinks parameters even at zero gradient") {
    auto p = make_param(1, 1, 2.0);
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    AdamW opt({p}, cfg);
    opt.step();
    // decoupled: p -= lr * wd * p = 2 - 0.1*0.5*2
    CHECK(p->data[0] == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("descends a quadratic") {
    // f(w) = w^2 from w = 1: fifty steps strictly reduce |w|.
    auto w = make_param(1, 1, 1.0);
    AdamWConfig cfg;
    cfg.lr = 0.1;
    AdamW opt({w}, cfg);
    double prev = 1.0;
    for (int i = 0; i < 50; ++i) {
        w->grad[0] = 2.0 * w->data[0];
        opt.step();
        zero_grad(w);
    }
    CHECK(std::fabs(w->data[0]) < prev);
    CHECK(std::fabs(w->data[0]) < 0.5);
}

TEST_CASE("identical runs produce bit-identical parameters") {
    auto run = [] {
        auto w = make_param(1, 4, 0.9);
        AdamWConfig cfg;
        cfg.lr = 0.05;
        AdamW opt({w}, cfg);
        for (int i = 0; i < 20; ++i) {
            for (int64_t j = 0; j < 4; ++j)
                w->grad[static_cast<size_t>(j)] = std::sin(0.1 * i + static_cast<double>(j)) * w->data[static_cast<size_t>(j)];
            opt.step();
            opt.zero_grad();
        }
        return w->data;
    };
    CHECK(run() == run());
}

TEST_CASE("rejects bad configurations") {
    auto p = make_param(1, 1, 1.0);
    AdamWConfig bad;
    bad.lr = 0.0;
    CHECK_THROWS_AS(AdamW({p}, bad), PreconditionError);
    bad.lr = -1.0;
    CHECK_THROWS_AS(AdamW({p}, bad), PreconditionError);

    auto frozen = make_tensor(1, 1, 1.0);  // no requires_grad
    CHECK_THROWS_AS(AdamW({frozen}, AdamWConfig{}), PreconditionError);
}

TEST_CASE("rejects a gradient whose shape drifted") {
    auto p = make_param(1, 2, 1.0);
    AdamW opt({p}, AdamWConfig{});
    p->grad.resize(5, 0.0);
    CHECK_THROWS_AS(opt.step(), PreconditionError);
}

}  // TEST_SUITE
