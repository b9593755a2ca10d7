#include "tsfb/nn.hpp"

#include <cmath>

namespace tsfb {

void Adam::step(ParamStore& params) {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
    for (const auto& [name, v] : params.all()) {
        auto it = moments_.find(name);
        if (it == moments_.end()) {
            it = moments_.emplace(name, std::make_pair(Tensor::zeros(v->val.rows, v->val.cols),
                                                       Tensor::zeros(v->val.rows, v->val.cols)))
                     .first;
        }
        Tensor& m = it->second.first;
        Tensor& vv = it->second.second;
        const bool has_grad = v->grad_ready;
        for (size_t i = 0; i < v->val.size(); ++i) {
            double g = has_grad ? v->grad.data[i] : 0.0;
            if (!std::isfinite(g))
                throw TrainingError("non-finite gradient in parameter " + name);
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g;
            vv.data[i] = cfg_.beta2 * vv.data[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = m.data[i] / bc1;
            double vhat = vv.data[i] / bc2;
            v->val.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

Var multi_head_attention(const Var& x, const std::vector<Var>& wq, const std::vector<Var>& wk,
                         const std::vector<Var>& wv, const Var& wo, const AttentionConfig& cfg) {
    const int T = x->val.rows;
    const double inv_sqrt_dk = 1.0 / std::sqrt(double(cfg.head_dim));
    Tensor mask(T, T);
    if (cfg.causal)
        for (int i = 0; i < T; ++i)
            for (int j = i + 1; j < T; ++j) mask.at(i, j) = -1e30;
    Var mask_c = constant(mask);
    std::vector<Var> heads;
    heads.reserve(cfg.n_heads);
    for (int h = 0; h < cfg.n_heads; ++h) {
        Var q = matmul(x, wq[h]);
        Var k = matmul(x, wk[h]);
        Var v = matmul(x, wv[h]);
        Var scores = scale(matmul_nt(q, k), inv_sqrt_dk);
        if (cfg.causal) scores = add(scores, mask_c);
        Var w = softmax_rows(scores);
        heads.push_back(matmul(w, v));
    }
    Var cat = cfg.n_heads == 1 ? heads[0] : concat_cols(heads);
    return matmul(cat, wo);
}

TransformerStack::TransformerStack(ParamStore& params, const std::string& prefix, int n_layers,
                                   const AttentionConfig& att, int ffn_dim, Rng& rng)
    : prefix_(prefix), n_layers_(n_layers), ffn_dim_(ffn_dim), att_(att), params_(&params) {
    const int d = att.model_dim;
    const int dk = att.head_dim;
    for (int l = 0; l < n_layers; ++l) {
        std::string lp = prefix + ".layer" + std::to_string(l);
        for (int h = 0; h < att.n_heads; ++h) {
            std::string hp = lp + ".head" + std::to_string(h);
            params.create(hp + ".wq", d, dk, 0.02, rng);
            params.create(hp + ".wk", d, dk, 0.02, rng);
            params.create(hp + ".wv", d, dk, 0.02, rng);
        }
        params.create(lp + ".wo", att.n_heads * dk, d, 0.0, rng);  // zero init: identity block
        params.create(lp + ".ln1_g", 1, d, 0.0, rng);
        params.create(lp + ".ln1_b", 1, d, 0.0, rng);
        params.create(lp + ".ffn_w1", d, ffn_dim, 0.02, rng);
        params.create(lp + ".ffn_b1", 1, ffn_dim, 0.0, rng);
        params.create(lp + ".ffn_w2", ffn_dim, d, 0.0, rng);  // zero init
        params.create(lp + ".ffn_b2", 1, d, 0.0, rng);
        params.create(lp + ".ln2_g", 1, d, 0.0, rng);
        params.create(lp + ".ln2_b", 1, d, 0.0, rng);
        // ln gains start at 1
        for (auto& g : params.get(lp + ".ln1_g")->val.data) g = 1.0;
        for (auto& g : params.get(lp + ".ln2_g")->val.data) g = 1.0;
    }
}

Var TransformerStack::mhsa(const Var& x, int layer) const {
    std::string lp = prefix_ + ".layer" + std::to_string(layer);
    std::vector<Var> wq, wk, wv;
    for (int h = 0; h < att_.n_heads; ++h) {
        std::string hp = lp + ".head" + std::to_string(h);
        wq.push_back(params_->get(hp + ".wq"));
        wk.push_back(params_->get(hp + ".wk"));
        wv.push_back(params_->get(hp + ".wv"));
    }
    return multi_head_attention(x, wq, wk, wv, params_->get(lp + ".wo"), att_);
}

Var TransformerStack::block(const Var& x, int layer) const {
    std::string lp = prefix_ + ".layer" + std::to_string(layer);
    auto ln_affine = [&](const Var& v, const std::string& g, const std::string& b) {
        Var n = layernorm_rows(v);
        n = mul_rowvec(n, params_->get(g));
        return add_rowvec(n, params_->get(b));
    };
    // pre-norm: x + MHSA(LN(x)), then + FFN(LN(.))
    Var h = add(x, mhsa(ln_affine(x, lp + ".ln1_g", lp + ".ln1_b"), layer));
    {
        Var gb = ln_affine(h, lp + ".ln2_g", lp + ".ln2_b");
        Var f = matmul(gb, params_->get(lp + ".ffn_w1"));
        f = add_rowvec(f, params_->get(lp + ".ffn_b1"));
        f = relu(f);
        f = matmul(f, params_->get(lp + ".ffn_w2"));
        f = add_rowvec(f, params_->get(lp + ".ffn_b2"));
        h = add(h, f);
    }
    return h;
}

Var TransformerStack::forward(const Var& x) const {
    Var h = x;
    for (int l = 0; l < n_layers_; ++l) h = block(h, l);
    return h;
}

TrainResult train_loop(ParamStore& params, const TrainSchedule& schedule,
                       const std::function<Var(int)>& batch_loss) {
    TrainResult res;
    Adam opt({schedule.lr});
    for (int s = 0; s < schedule.steps; ++s) {
        params.zero_grad();
        Var loss = batch_loss(s);
        double lv = loss->val.at(0, 0);
        if (!std::isfinite(lv)) {
            res.aborted_nan = true;
            break;
        }
        res.loss_trajectory.push_back(lv);
        backward(loss);
        opt.step(params);
        res.steps_completed = s + 1;
    }
    return res;
}

}  // namespace tsfb
