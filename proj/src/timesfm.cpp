#include "tsfb/timesfm.hpp"

#include <cmath>

namespace tsfb {

PatchSeries patchify(const std::vector<double>& context, const PatchConfig& cfg) {
    if (context.empty()) throw DataError("patchify: empty context");
    if (cfg.input_patch_len < 1) throw ConfigError("patchify: input_patch_len must be >= 1");
    const int L = cfg.input_patch_len;
    const int T = int(context.size());
    const int M = (T + L - 1) / L;
    const int pad = M * L - T;
    PatchSeries ps;
    ps.context_len = T;
    ps.patches = Tensor(M, L);
    ps.pad_mask = Tensor(M, L);
    for (int i = 0; i < M * L; ++i) {
        int src = i - pad;  // left padding
        if (src >= 0) {
            ps.patches.data[i] = context[src];
            ps.pad_mask.data[i] = 1.0;
        }
    }
    return ps;
}

std::vector<double> unpatchify(const PatchSeries& ps) {
    std::vector<double> out;
    for (size_t i = 0; i < ps.patches.size(); ++i)
        if (ps.pad_mask.data[i] != 0.0) out.push_back(ps.patches.data[i]);
    return out;
}

bool sign_direction(double point_forecast) {
    if (!std::isfinite(point_forecast)) throw DataError("sign_direction: non-finite forecast");
    return point_forecast > 0.0;
}

nlohmann::json TimesFmConfig::to_json() const {
    return {{"input_patch_len", patch.input_patch_len},
            {"output_patch_len", patch.output_patch_len},
            {"embed_dim", patch.embed_dim},
            {"n_layers", n_layers},
            {"n_heads", n_heads},
            {"head_dim", head_dim},
            {"ffn_dim", ffn_dim},
            {"max_patches", max_patches},
            {"mask_prob", mask_prob},
            {"standardize", "per-window mean/sd, inverted on output"}};
}

TimesFmConfig TimesFmConfig::from_json(const nlohmann::json& j) {
    TimesFmConfig c;
    c.patch.input_patch_len = j.at("input_patch_len");
    c.patch.output_patch_len = j.at("output_patch_len");
    c.patch.embed_dim = j.at("embed_dim");
    c.n_layers = j.at("n_layers");
    c.n_heads = j.at("n_heads");
    c.head_dim = j.at("head_dim");
    c.ffn_dim = j.at("ffn_dim");
    c.max_patches = j.at("max_patches");
    c.mask_prob = j.at("mask_prob");
    return c;
}

TimesFmModel::TimesFmModel(const TimesFmConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg.n_heads * cfg.head_dim != cfg.patch.embed_dim)
        throw ConfigError("timesfm: n_heads * head_dim must equal embed_dim");
    Rng rng(seed);
    const int L = cfg.patch.input_patch_len;
    const int h = cfg.patch.embed_dim;
    const int opl = cfg.patch.output_patch_len;
    // encoder f: R^{2L} (patch ++ pad mask channel) -> R^h, residual
    params_.create("enc_skip", 2 * L, h, 0.02, rng);
    params_.create("enc_w1", 2 * L, h, 0.02, rng);
    params_.create("enc_b1", 1, h, 0.0, rng);
    params_.create("enc_w2", h, h, 0.0, rng);  // zero init: encoder == skip at init
    params_.create("enc_b2", 1, h, 0.0, rng);
    params_.create("pos_emb", cfg.max_patches, h, 0.02, rng);
    AttentionConfig att{cfg.n_heads, h, cfg.head_dim, true};
    stack_ = TransformerStack(params_, "dec", cfg.n_layers, att, cfg.ffn_dim, rng);
    params_.create("ln_f_g", 1, h, 0.0, rng);
    params_.create("ln_f_b", 1, h, 0.0, rng);
    for (auto& g : params_.get("ln_f_g")->val.data) g = 1.0;
    // decoder g: R^h -> R^{opl}; skip and output both zero so the fresh model
    // forecasts exactly zero
    params_.create("dec_skip", h, opl, 0.0, rng);
    params_.create("dec_w1", h, h, 0.02, rng);
    params_.create("dec_b1", 1, h, 0.0, rng);
    params_.create("dec_w2", h, opl, 0.0, rng);
    params_.create("dec_b2", 1, opl, 0.0, rng);
}

Var TimesFmModel::forward(const PatchSeries& ps, const std::vector<uint8_t>& patch_mask) const {
    const int M = ps.n_patches();
    const int L = cfg_.patch.input_patch_len;
    if (ps.patches.cols != L) throw DimensionError("timesfm: patch length mismatch");
    if (M > cfg_.max_patches) throw DimensionError("timesfm: too many patches for max_patches");
    if (int(patch_mask.size()) != M) throw DimensionError("timesfm: patch_mask length mismatch");

    // input rows: [patch values (zeroed when masked) ++ validity channel]
    Tensor x(M, 2 * L);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < L; ++j) {
            bool ok = ps.pad_mask.at(i, j) != 0.0 && !patch_mask[i];
            x.at(i, j) = ok ? ps.patches.at(i, j) : 0.0;
            x.at(i, L + j) = ok ? 1.0 : 0.0;
        }
    Var xin = constant(std::move(x));
    Var hidden = matmul(xin, params_.get("enc_w1"));
    hidden = add_rowvec(hidden, params_.get("enc_b1"));
    hidden = relu(hidden);
    hidden = matmul(hidden, params_.get("enc_w2"));
    hidden = add_rowvec(hidden, params_.get("enc_b2"));
    Var e = add(matmul(xin, params_.get("enc_skip")), hidden);

    std::vector<int> pos(M);
    for (int i = 0; i < M; ++i) pos[i] = i;
    e = add(e, embedding(params_.get("pos_emb"), pos));

    Var hseq = stack_.forward(e);
    hseq = layernorm_rows(hseq);
    hseq = mul_rowvec(hseq, params_.get("ln_f_g"));
    hseq = add_rowvec(hseq, params_.get("ln_f_b"));

    Var d = matmul(hseq, params_.get("dec_w1"));
    d = add_rowvec(d, params_.get("dec_b1"));
    d = relu(d);
    d = matmul(d, params_.get("dec_w2"));
    d = add_rowvec(d, params_.get("dec_b2"));
    return add(matmul(hseq, params_.get("dec_skip")), d);
}

namespace {

struct Standardized {
    std::vector<double> values;
    double mu = 0.0, sd = 1.0;
};

Standardized standardize(const std::vector<double>& v) {
    Standardized s;
    for (double x : v) {
        if (!std::isfinite(x)) throw DataError("timesfm: non-finite input value");
        s.mu += x;
    }
    s.mu /= double(v.size());
    double var = 0.0;
    for (double x : v) var += (x - s.mu) * (x - s.mu);
    s.sd = std::sqrt(var / double(v.size()));
    if (s.sd == 0.0) s.sd = 1.0;
    s.values.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) s.values[i] = (v[i] - s.mu) / s.sd;
    return s;
}

}  // namespace

Var TimesFmModel::masked_train_loss(const std::vector<std::vector<double>>& batch,
                                    double mask_prob, Rng& rng, int& resampled) const {
    if (batch.empty()) throw TrainingError("timesfm: empty batch");
    if (!(mask_prob >= 0.0 && mask_prob < 1.0))
        throw ConfigError("timesfm: mask_prob must be in [0, 1)");
    const int opl = cfg_.patch.output_patch_len;
    std::vector<Var> losses;
    for (const auto& window : batch) {
        Standardized st = standardize(window);
        PatchSeries ps = patchify(st.values, cfg_.patch);
        const int M = ps.n_patches();
        if (M < 2) throw TrainingError("timesfm: window shorter than two patches");

        for (int attempt = 0;; ++attempt) {
            std::vector<uint8_t> pmask(M, 0);
            for (int i = 0; i < M; ++i) pmask[i] = rng.uniform() < mask_prob ? 1 : 0;

            // slot i predicts the head of patch i+1; usable when the target
            // patch is unmasked and its target cells are real data
            Tensor target(M - 1, opl), weights(M - 1, opl);
            for (int i = 0; i + 1 < M; ++i)
                for (int j = 0; j < opl && j < ps.patches.cols; ++j) {
                    bool ok = !pmask[i + 1] && ps.pad_mask.at(i + 1, j) != 0.0;
                    target.at(i, j) = ps.patches.at(i + 1, j);
                    weights.at(i, j) = ok ? 1.0 : 0.0;
                }
            double wsum = 0.0;
            for (double w : weights.data) wsum += w;
            if (wsum <= 0.0) {
                if (attempt > 64)
                    throw TrainingError("timesfm: could not draw a usable mask");
                ++resampled;  // all slots masked: redraw, per the training contract
                continue;
            }
            Var pred = forward(ps, pmask);
            std::vector<int> rows(M - 1);
            for (int i = 0; i + 1 < M; ++i) rows[i] = i;
            losses.push_back(
                mse_weighted(select_rows(pred, rows), constant(std::move(target)), weights));
            break;
        }
    }
    Var total = losses[0];
    for (size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    return scale(total, 1.0 / double(losses.size()));
}

TrainResult TimesFmModel::train(
    const std::function<std::vector<std::vector<double>>(int)>& batches,
    const TrainSchedule& schedule, uint64_t seed) {
    Rng rng(seed);
    int resampled = 0;
    return train_loop(params_, schedule, [&](int step) {
        return masked_train_loss(batches(step), cfg_.mask_prob, rng, resampled);
    });
}

std::vector<double> TimesFmModel::rolling_forecast(const std::vector<double>& context, int steps,
                                                   int* model_calls) const {
    if (steps < 1) throw ConfigError("rolling_forecast: steps must be >= 1");
    const int opl = cfg_.patch.output_patch_len;
    std::vector<double> ctx = context;
    std::vector<double> out;
    int calls = 0;
    while (int(out.size()) < steps) {
        // keep the context within the model's patch budget
        size_t max_len = size_t(cfg_.max_patches) * cfg_.patch.input_patch_len;
        std::vector<double> view = ctx;
        if (view.size() > max_len) view.erase(view.begin(), view.end() - max_len);
        Standardized st = standardize(view);
        PatchSeries ps = patchify(st.values, cfg_.patch);
        std::vector<uint8_t> pmask(ps.n_patches(), 0);
        Var pred = forward(ps, pmask);
        ++calls;
        for (int j = 0; j < opl; ++j) {
            double v = st.mu + st.sd * pred->val.at(ps.n_patches() - 1, j);
            out.push_back(v);
            ctx.push_back(v);
        }
    }
    out.resize(size_t(steps));
    if (model_calls) *model_calls = calls;
    return out;
}

Checkpoint TimesFmModel::to_checkpoint(nlohmann::json extra) const {
    nlohmann::json desc = std::move(extra);
    desc["model"] = "timesfm";
    desc["config"] = cfg_.to_json();
    return Checkpoint::from_store(params_, std::move(desc));
}

TimesFmModel TimesFmModel::from_checkpoint(const Checkpoint& ck) {
    if (ck.descriptor.value("model", "") != "timesfm")
        throw DataError("checkpoint is not a timesfm model");
    TimesFmModel m(TimesFmConfig::from_json(ck.descriptor.at("config")), 0);
    ck.restore_into(m.params_);
    return m;
}

}  // namespace tsfb
