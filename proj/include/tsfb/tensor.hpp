#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "tsfb/errors.hpp"

namespace tsfb {

// Dense row-major 2-D tensor of doubles. Vectors are 1xN or Nx1 as needed.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(size_t(r) * c, 0.0) {}
    Tensor(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        assert(data.size() == size_t(r) * c);
    }

    double& at(int r, int c) { return data[size_t(r) * cols + c]; }
    double at(int r, int c) const { return data[size_t(r) * cols + c]; }
    size_t size() const { return data.size(); }

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double v) {
        Tensor t(r, c);
        for (auto& x : t.data) x = v;
        return t;
    }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

namespace kernels {

// Serial reference kernels. Kept as the oracle for the OpenMP versions and
// used by the kernel benchmark.
namespace serial {

inline void matmul_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw DimensionError("matmul_nn shape mismatch");
    for (int i = 0; i < a.rows; ++i) {
        double* crow = &c.data[size_t(i) * c.cols];
        if (!accumulate)
            for (int j = 0; j < c.cols; ++j) crow[j] = 0.0;
        for (int k = 0; k < a.cols; ++k) {
            double aik = a.at(i, k);
            const double* brow = &b.data[size_t(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

// c = a * b^T
inline void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
        throw DimensionError("matmul_nt shape mismatch");
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[size_t(i) * a.cols];
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = &b.data[size_t(j) * b.cols];
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            double& cij = c.at(i, j);
            cij = accumulate ? cij + s : s;
        }
    }
}

// c = a^T * b
inline void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw DimensionError("matmul_tn shape mismatch");
    if (!accumulate)
        for (auto& x : c.data) x = 0.0;
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = &a.data[size_t(k) * a.cols];
        const double* brow = &b.data[size_t(k) * b.cols];
        for (int i = 0; i < a.cols; ++i) {
            double aki = arow[i];
            double* crow = &c.data[size_t(i) * c.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

}  // namespace serial

// OpenMP kernels. Each output row is owned by one thread, so results are
// bitwise identical to the serial versions at any thread count.
void matmul_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);

int max_threads();

}  // namespace kernels

}  // namespace tsfb
