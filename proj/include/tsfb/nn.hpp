#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsfb/autodiff.hpp"
#include "tsfb/rng.hpp"

namespace tsfb {

// Named parameter registry. Iteration order is name-sorted, which fixes the
// checkpoint blob order and the optimizer update order.
class ParamStore {
public:
    Var create(const std::string& name, int rows, int cols, double init_sd, Rng& rng) {
        Tensor t(rows, cols);
        if (init_sd > 0.0)
            for (auto& x : t.data) x = init_sd * rng.normal();
        Var v = make_param(std::move(t));
        params_[name] = v;
        return v;
    }

    Var get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("param not found: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return params_.count(name) != 0; }

    const std::map<std::string, Var>& all() const { return params_; }

    void zero_grad() {
        for (auto& [name, v] : params_) v->grad_ready = false;
    }

    size_t count_scalars() const {
        size_t n = 0;
        for (const auto& [name, v] : params_) n += v->val.size();
        return n;
    }

private:
    std::map<std::string, Var> params_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // bias-corrected update over every parameter in the store
    void step(ParamStore& params);

    long long steps_done() const { return step_; }
    AdamConfig& config() { return cfg_; }

private:
    AdamConfig cfg_;
    long long step_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> moments_;  // (m, v) per param
};

struct AttentionConfig {
    int n_heads = 2;
    int model_dim = 64;
    int head_dim = 32;
    bool causal = true;
};

// Pre-norm transformer stack shared by the token model and the patch model.
// Residual output projections are zero-initialized so a fresh block is the
// identity map.
class TransformerStack {
public:
    TransformerStack() = default;
    TransformerStack(ParamStore& params, const std::string& prefix, int n_layers,
                     const AttentionConfig& att, int ffn_dim, Rng& rng);

    Var forward(const Var& x) const;

    const AttentionConfig& attention() const { return att_; }
    int layers() const { return n_layers_; }

    // owners that move their ParamStore must re-point the stack at it
    void rebind(ParamStore* params) { params_ = params; }

private:
    Var block(const Var& x, int layer) const;
    Var mhsa(const Var& x, int layer) const;

    std::string prefix_;
    int n_layers_ = 0;
    int ffn_dim_ = 0;
    AttentionConfig att_;
    ParamStore* params_ = nullptr;
};

// standalone MHSA per the attention equations; used directly by tests
Var multi_head_attention(const Var& x, const std::vector<Var>& wq, const std::vector<Var>& wk,
                         const std::vector<Var>& wv, const Var& wo, const AttentionConfig& cfg);

struct TrainSchedule {
    int steps = 2000;
    int batch_size = 64;
    double lr = 1e-3;
};

struct TrainResult {
    std::vector<double> loss_trajectory;
    bool aborted_nan = false;
    int steps_completed = 0;
};

// Minibatch loop over a caller-supplied loss builder. On NaN loss the loop
// stops and reports the abort; the caller still holds the last good
// parameters because the optimizer step for the NaN batch is skipped.
TrainResult train_loop(ParamStore& params, const TrainSchedule& schedule,
                       const std::function<Var(int step)>& batch_loss);

}  // namespace tsfb
