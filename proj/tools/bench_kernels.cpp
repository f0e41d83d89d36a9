// Times the serial reference kernels against their OpenMP variants and
// verifies the two produce bit-identical outputs at every size. On a single
// hardware thread the dispatch never leaves the serial path, so the
// interesting columns are the explicit _serial/_omp calls.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flgn/kernels.hpp"
#include "flgn/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm-up, also primes the OpenMP pool
    const auto start = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const std::chrono::duration<double, std::milli> dt = Clock::now() - start;
    return dt.count() / reps;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> randu(int64_t n, flgn::RngStream& rng) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

struct Row {
    std::string name;
    double serial_ms;
    double omp_ms;
    bool identical;
};

void print_rows(const std::vector<Row>& rows) {
    std::printf("%-26s %12s %12s %9s %10s\n", "kernel", "serial ms", "omp ms", "speedup",
                "bitwise");
    for (const auto& r : rows) {
        std::printf("%-26s %12.3f %12.3f %8.2fx %10s\n", r.name.c_str(), r.serial_ms, r.omp_ms,
                    r.serial_ms / r.omp_ms, r.identical ? "equal" : "DIFFER");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP kernel comparison"};
    int threads = 0;
    int64_t size = 256;
    int reps = 5;
    app.add_option("--threads", threads, "OpenMP thread budget (0 = library default)");
    app.add_option("--size", size, "square matrix dimension")->check(CLI::PositiveNumber);
    app.add_option("--reps", reps, "timed repetitions per kernel")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    flgn::kern::set_max_threads(threads);
    std::printf("size %lld, %d reps, thread budget %d\n\n", static_cast<long long>(size), reps,
                flgn::kern::max_threads());

    flgn::RngStream rng(42, "bench");
    const int64_t n = size;
    const std::vector<double> a = randu(n * n, rng);
    const std::vector<double> b = randu(n * n, rng);
    std::vector<double> out_s(static_cast<size_t>(n * n));
    std::vector<double> out_p(static_cast<size_t>(n * n));
    std::vector<Row> rows;

    auto bench = [&](const std::string& name, auto&& serial, auto&& omp) {
        const double ts = time_ms(serial, reps);
        const double tp = time_ms(omp, reps);
        rows.push_back({name, ts, tp, bits_equal(out_s, out_p)});
    };

    using namespace flgn::kern;
    bench(
        "matmul", [&] { matmul_serial(a.data(), b.data(), out_s.data(), n, n, n); },
        [&] { matmul_omp(a.data(), b.data(), out_p.data(), n, n, n); });
    bench(
        "matmul_nt", [&] { matmul_nt_serial(a.data(), b.data(), out_s.data(), n, n, n); },
        [&] { matmul_nt_omp(a.data(), b.data(), out_p.data(), n, n, n); });
    bench(
        "matmul_tn", [&] { matmul_tn_serial(a.data(), b.data(), out_s.data(), n, n, n); },
        [&] { matmul_tn_omp(a.data(), b.data(), out_p.data(), n, n, n); });
    bench(
        "ew_binary mul",
        [&] { ew_binary_serial(BinOp::Mul, a.data(), b.data(), out_s.data(), n * n); },
        [&] { ew_binary_omp(BinOp::Mul, a.data(), b.data(), out_p.data(), n * n); });
    bench(
        "silu", [&] { silu_serial(a.data(), out_s.data(), n * n); },
        [&] { silu_omp(a.data(), out_p.data(), n * n); });
    bench(
        "softmax_rows", [&] { softmax_rows_serial(a.data(), out_s.data(), n, n); },
        [&] { softmax_rows_omp(a.data(), out_p.data(), n, n); });
    {
        std::vector<double> mean_s(static_cast<size_t>(n)), rstd_s(static_cast<size_t>(n));
        std::vector<double> mean_p(static_cast<size_t>(n)), rstd_p(static_cast<size_t>(n));
        const double ts = time_ms(
            [&] {
                layer_norm_rows_serial(a.data(), out_s.data(), mean_s.data(), rstd_s.data(), n, n,
                                       1e-6);
            },
            reps);
        const double tp = time_ms(
            [&] {
                layer_norm_rows_omp(a.data(), out_p.data(), mean_p.data(), rstd_p.data(), n, n,
                                    1e-6);
            },
            reps);
        rows.push_back({"layer_norm_rows", ts, tp,
                        bits_equal(out_s, out_p) && bits_equal(mean_s, mean_p) &&
                            bits_equal(rstd_s, rstd_p)});
    }

    print_rows(rows);
    for (const auto& r : rows) {
        if (!r.identical) {
            std::fprintf(stderr, "\n%s: serial and OpenMP outputs diverged\n", r.name.c_str());
            return 1;
        }
    }
    return 0;
}
