// Compares the serial reference kernels against the OpenMP versions and
// verifies bitwise agreement while timing both. TSFB_THREADS bounds the pool.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "tsfb/gbt.hpp"
#include "tsfb/rng.hpp"
#include "tsfb/tensor.hpp"

using namespace tsfb;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Tensor random_tensor(int r, int c, Rng& rng) {
    Tensor t(r, c);
    for (auto& x : t.data) x = rng.normal();
    return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && a.data == b.data;
}

void bench_matmul(int n, Rng& rng) {
    Tensor a = random_tensor(n, n, rng), b = random_tensor(n, n, rng);
    Tensor cs(n, n), cp(n, n);
    int reps = n <= 128 ? 20 : 5;

    struct Variant {
        const char* name;
        std::function<void()> serial, parallel;
    };
    std::vector<Variant> variants = {
        {"matmul_nn", [&] { kernels::serial::matmul_nn(a, b, cs, false); },
         [&] { kernels::matmul_nn(a, b, cp, false); }},
        {"matmul_nt", [&] { kernels::serial::matmul_nt(a, b, cs, false); },
         [&] { kernels::matmul_nt(a, b, cp, false); }},
        {"matmul_tn", [&] { kernels::serial::matmul_tn(a, b, cs, false); },
         [&] { kernels::matmul_tn(a, b, cp, false); }},
    };
    for (auto& v : variants) {
        double ts = time_ms(v.serial, reps);
        double tp = time_ms(v.parallel, reps);
        bool same = bitwise_equal(cs, cp);
        std::printf("%-10s n=%-5d serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n",
                    v.name, n, ts, tp, ts / tp, same ? "bitwise-equal" : "MISMATCH");
    }
}

void bench_split(int n, int c, Rng& rng) {
    Tensor X = random_tensor(n, c, rng);
    std::vector<int> rows;
    for (int i = 0; i < n; ++i) rows.push_back(i);
    std::vector<double> g, h;
    for (int i = 0; i < n; ++i) {
        g.push_back(rng.normal());
        h.push_back(1.0);
    }
    std::optional<SplitResult> rs, rp;
    double ts = time_ms([&] { rs = detail::best_split_serial(X, rows, g, h, 1.0, 0.0); }, 10);
    double tp = time_ms([&] { rp = best_split(X, rows, g, h, 1.0, 0.0); }, 10);
    bool same = rs.has_value() == rp.has_value() &&
                (!rs || (rs->feature == rp->feature && rs->threshold == rp->threshold &&
                         rs->gain == rp->gain));
    std::printf("%-10s n=%-5d C=%-3d serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n",
                "best_split", n, c, ts, tp, ts / tp, same ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
    std::printf("threads: %d\n", kernels::max_threads());
    Rng rng(1234);
    for (int n : {64, 256, 512}) bench_matmul(n, rng);
    for (int n : {1024, 16384}) bench_split(n, 32, rng);
    return 0;
}
