#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tsfb/tensor.hpp"

namespace tsfb {

// Reverse-mode tape. Graphs are built per forward pass; parameter nodes are
// long-lived leaves whose grads accumulate until the optimizer clears them.
struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;  // grad buffer initialized for this pass
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backfn;

    explicit Node(Tensor v) : val(std::move(v)) {}

    Tensor& ensure_grad() {
        if (!grad_ready) {
            grad = Tensor::zeros(val.rows, val.cols);
            grad_ready = true;
        }
        return grad;
    }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor v);
Var make_param(Tensor v);

// ops
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_rowvec(const Var& a, const Var& bias);  // bias is 1 x cols
Var mul_rowvec(const Var& a, const Var& gains);  // gains is 1 x cols
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var relu(const Var& a);
Var softmax_rows(const Var& a);
Var layernorm_rows(const Var& a, double eps = 1e-8);
Var embedding(const Var& table, const std::vector<int>& ids);
Var concat_cols(const std::vector<Var>& parts);
Var select_rows(const Var& a, const std::vector<int>& rows);

// scalar losses (1x1 outputs)
Var cross_entropy_logits(const Var& logits, const std::vector<int>& targets);
Var mse(const Var& pred, const Var& target);
Var mse_weighted(const Var& pred, const Var& target, const Tensor& weights);
Var l1_penalty(const Var& w, double lambda);

// batch norm over rows (feature = column); updates running stats when training
Var batchnorm_cols(const Var& a, const Var& gamma, const Var& beta,
                   Tensor& running_mean, Tensor& running_var, double momentum,
                   bool training, double eps = 1e-5);

void backward(const Var& root);

}  // namespace tsfb
