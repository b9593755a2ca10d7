#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "tsfb/tensor.hpp"

namespace tsfb {

struct GbtParams {
    double learning_rate = 0.1;
    double reg_lambda = 0.0;
    double gamma = 0.0;
    int max_depth = 6;
    enum class Growth { depth_wise, leaf_wise } growth = Growth::depth_wise;
    int max_leaves = 31;          // leaf-wise only
    int rounds = 200;
    int early_stop_rounds = 20;   // 0 disables early stopping
    double validation_fraction = 0.1;
};

// squared loss: g = yhat - y, h = 1
void grad_hess(const std::vector<double>& y, const std::vector<double>& yhat,
               std::vector<double>& g, std::vector<double>& h);

struct SplitResult {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Exhaustive scan over midpoints of consecutive distinct sorted values.
// gain = 1/2 [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] - gamma; none if <= 0.
// Ties break toward lower feature index, then lower threshold.
std::optional<SplitResult> best_split(const Tensor& X, const std::vector<int>& rows,
                                      const std::vector<double>& g,
                                      const std::vector<double>& h, double reg_lambda,
                                      double gamma);

namespace detail {
// serial reference used as the oracle for the parallel feature scan
std::optional<SplitResult> best_split_serial(const Tensor& X, const std::vector<int>& rows,
                                             const std::vector<double>& g,
                                             const std::vector<double>& h, double reg_lambda,
                                             double gamma);
}  // namespace detail

struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    double threshold = 0.0;
    int left = -1, right = -1;
    double leaf_value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;  // node 0 is the root

    double predict(const std::vector<double>& x) const;
    int n_leaves() const;
};

Tree grow_tree(const Tensor& X, const std::vector<int>& rows, const std::vector<double>& g,
               const std::vector<double>& h, const GbtParams& params);

struct BoostedEnsemble {
    std::vector<Tree> trees;
    double learning_rate = 0.1;
    double base_score = 0.0;
    double reg_lambda = 0.0;
    double gamma = 0.0;

    double predict(const std::vector<double>& x) const;
    nlohmann::json to_json() const;
    static BoostedEnsemble from_json(const nlohmann::json& j);
};

BoostedEnsemble boost(const Tensor& X, const std::vector<double>& y, const GbtParams& params);

}  // namespace tsfb
