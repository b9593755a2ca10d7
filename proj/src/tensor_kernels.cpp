#include "tsfb/tensor.hpp"

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tsfb::kernels {

int max_threads() {
#ifdef _OPENMP
    if (const char* env = std::getenv("TSFB_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw DimensionError("matmul_nn shape mismatch");
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (a.rows > 1 && a.size() * b.cols > 65536)
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

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
        throw DimensionError("matmul_nt shape mismatch");
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (a.rows > 1 && a.size() * b.rows > 65536)
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

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw DimensionError("matmul_tn shape mismatch");
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (c.rows > 1 && a.size() * b.cols > 65536)
    for (int i = 0; i < c.rows; ++i) {
        double* crow = &c.data[size_t(i) * c.cols];
        if (!accumulate)
            for (int j = 0; j < c.cols; ++j) crow[j] = 0.0;
        for (int k = 0; k < a.rows; ++k) {
            double aki = a.at(k, i);
            const double* brow = &b.data[size_t(k) * b.cols];
            for (int j = 0; j < c.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

}  // namespace tsfb::kernels
