#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <cstring>

#include "tsfb/rng.hpp"
#include "tsfb/tensor.hpp"

using namespace tsfb;

namespace {

Tensor random_tensor(int r, int c, Rng& rng) {
    Tensor t(r, c);
    for (auto& x : t.data) x = rng.normal();
    return t;
}

Tensor transpose(const Tensor& a) {
    Tensor t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.rows == b.rows && a.cols == b.cols &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul hand example") {
    Tensor a(2, 2), b(2, 2), c(2, 2);
    a.data = {1, 2, 3, 4};
    b.data = {5, 6, 7, 8};
    kernels::serial::matmul_nn(a, b, c, false);
    CHECK(c.at(0, 0) == doctest::Approx(19));
    CHECK(c.at(0, 1) == doctest::Approx(22));
    CHECK(c.at(1, 0) == doctest::Approx(43));
    CHECK(c.at(1, 1) == doctest::Approx(50));
}

TEST_CASE("transpose variants match explicit transposition") {
    Rng rng(11);
    Tensor a = random_tensor(7, 5, rng);

    // nt: a * b^T
    Tensor b = random_tensor(9, 5, rng);
    Tensor c1(7, 9), c2(7, 9);
    kernels::serial::matmul_nt(a, b, c1, false);
    kernels::serial::matmul_nn(a, transpose(b), c2, false);
    for (size_t i = 0; i < c1.data.size(); ++i) CHECK(c1.data[i] == doctest::Approx(c2.data[i]));

    // tn: a^T * b with a (7x5), b (7x9)
    Tensor b2 = random_tensor(7, 9, rng);
    Tensor d1(5, 9), d2(5, 9);
    kernels::serial::matmul_tn(a, b2, d1, false);
    kernels::serial::matmul_nn(transpose(a), b2, d2, false);
    for (size_t i = 0; i < d1.data.size(); ++i) CHECK(d1.data[i] == doctest::Approx(d2.data[i]));
}

TEST_CASE("accumulate flag adds onto the output") {
    Rng rng(3);
    Tensor a = random_tensor(4, 6, rng), b = random_tensor(6, 3, rng);
    Tensor c = Tensor::full(4, 3, 2.5), base(4, 3);
    kernels::serial::matmul_nn(a, b, base, false);
    kernels::serial::matmul_nn(a, b, c, true);
    for (size_t i = 0; i < c.data.size(); ++i)
        CHECK(c.data[i] == doctest::Approx(base.data[i] + 2.5));
}

TEST_CASE("parallel kernels are bitwise identical to serial at any thread count") {
    Rng rng(42);
    for (int trial = 0; trial < 4; ++trial) {
        int m = 1 + int(rng.below(40)), k = 1 + int(rng.below(40)), n = 1 + int(rng.below(40));
        Tensor a = random_tensor(m, k, rng), b = random_tensor(k, n, rng);
        Tensor bt = random_tensor(n, k, rng), at = random_tensor(k, m, rng);
        for (const char* nt : {"1", "2", "7"}) {
            setenv("TSFB_THREADS", nt, 1);
            Tensor s(m, n), p(m, n);
            kernels::serial::matmul_nn(a, b, s, false);
            kernels::matmul_nn(a, b, p, false);
            CHECK(bitwise_equal(s, p));

            Tensor s2(m, n), p2(m, n);
            kernels::serial::matmul_nt(a, bt, s2, false);
            kernels::matmul_nt(a, bt, p2, false);
            CHECK(bitwise_equal(s2, p2));

            Tensor s3(m, n), p3(m, n);
            kernels::serial::matmul_tn(at, b, s3, false);
            kernels::matmul_tn(at, b, p3, false);
            CHECK(bitwise_equal(s3, p3));
        }
    }
    unsetenv("TSFB_THREADS");
}

TEST_CASE("TSFB_THREADS caps the worker count") {
    setenv("TSFB_THREADS", "3", 1);
    CHECK(kernels::max_threads() == 3);
    unsetenv("TSFB_THREADS");
    CHECK(kernels::max_threads() >= 1);
}
