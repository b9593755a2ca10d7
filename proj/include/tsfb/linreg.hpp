#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tsfb/tensor.hpp"

namespace tsfb {

double huber_loss(double residual, double delta);

struct PenaltySpec {
    double lambda1 = 0.0;  // l1 coefficient
    double lambda2 = 0.0;  // l2 coefficient (objective carries lambda2/2 * ||theta||^2)

    static PenaltySpec none() { return {}; }
    static PenaltySpec lasso(double a) { return {a, 0.0}; }
    static PenaltySpec ridge(double a) { return {0.0, a}; }
    static PenaltySpec elastic(double alpha, double l1_ratio) {
        return {alpha * l1_ratio, alpha * (1.0 - l1_ratio)};
    }
};

struct LinearModel {
    std::vector<double> theta;  // original units
    double intercept = 0.0;
    PenaltySpec penalty;
    double delta = 1.35;
    // internal standardization recorded for the persistence round trip
    std::vector<double> x_mean, x_sd;
    std::vector<double> theta_std;  // coefficients in standardized space
    bool converged = false;
    double objective = 0.0;
    int iterations = 0;

    double predict(const std::vector<double>& x) const;
    nlohmann::json to_json() const;
    static LinearModel from_json(const nlohmann::json& j);
};

// Proximal-gradient Huber fit with backtracking; features standardized
// internally, intercept unpenalized, coefficients reported in original units.
LinearModel fit_huber_linear(const Tensor& X, const std::vector<double>& y,
                             const PenaltySpec& penalty, double delta = 1.35,
                             int max_iter = 5000, double tol = 1e-8);

struct PCRModel {
    Tensor Vk;  // C x k, orthonormal columns
    LinearModel reg;
    std::vector<double> x_mean, x_sd;
    int k = 0;

    double predict(const std::vector<double>& x) const;
    nlohmann::json to_json() const;
    static PCRModel from_json(const nlohmann::json& j);
};

// exact-SVD principal-component regression with a Huber head
PCRModel fit_pcr(const Tensor& X, const std::vector<double>& y, int k, double delta = 1.35);

}  // namespace tsfb
