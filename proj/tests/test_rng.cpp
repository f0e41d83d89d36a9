#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "flgn/rng.hpp"

using namespace flgn;

TEST_SUITE("rng") {

TEST_CASE("streams replay bit-identically for a fixed seed") {
    RngStream a(12345), b(12345);
    for (int i = 0; i < 64; ++i) CHECK(a.next_u64() == b.next_u64());
    RngStream c(12345, "data"), d(12345, "data");
    for (int i = 0; i < 16; ++i) CHECK(c.next_unit() == d.next_unit());
}

TEST_CASE("named streams and forks are independent") {
    RngStream data(7, "data"), mask(7, "mask");
    bool differ = false;
    for (int i = 0; i < 8; ++i) differ |= (data.next_u64() != mask.next_u64());
    CHECK(differ);

    RngStream root(99, "noise");
    RngStream f0 = root.fork(0), f1 = root.fork(1), f0b = root.fork(0);
    CHECK(f0.state() == f0b.state());
    CHECK(f0.next_u64() == f0b.next_u64());
    CHECK(f0.state() != f1.state());
    // Forking does not advance the parent.
    RngStream root2(99, "noise");
    (void)root.fork(5);
    CHECK(root.next_u64() == root2.next_u64());
}

TEST_CASE("copies replay the original") {
    RngStream s(31, "proto");
    s.next_u64();
    RngStream saved = s;
    const uint64_t x1 = s.next_u64(), x2 = s.next_u64();
    CHECK(saved.next_u64() == x1);
    CHECK(saved.next_u64() == x2);
}

TEST_CASE("uniform draws stay inside their interval") {
    RngStream s(5, "unit");
    for (int i = 0; i < 10000; ++i) {
        const double u = s.next_unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        const double v = s.uniform(-2.5, 3.25);
        CHECK(v >= -2.5);
        CHECK(v < 3.25);
    }
    for (int i = 0; i < 1000; ++i) CHECK(s.next_below(7) < 7);
}

TEST_CASE("normal consumes exactly two uniforms") {
    RngStream a(77, "n"), b(77, "n");
    (void)a.normal();
    (void)b.next_u64();
    (void)b.next_u64();
    CHECK(a.state() == b.state());
    CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("normal has roughly standard moments") {
    RngStream s(2024, "moments");
    const int n = 40000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);     // 4 sigma of the sample mean
    CHECK(var == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("hash helpers separate close inputs") {
    CHECK(fnv1a64("a") != fnv1a64("b"));
    CHECK(fnv1a64("stage1") != fnv1a64("stage2"));
    CHECK(mix64(1, 2) != mix64(2, 1));
    uint64_t st = 0;
    const uint64_t first = splitmix64(st);
    CHECK(st != 0);  // state advances
    uint64_t st2 = 0;
    CHECK(splitmix64(st2) == first);  // and deterministically
}

}  // TEST_SUITE
