#include "tsfb/chronos.hpp"

#include <algorithm>
#include <cmath>

#include "tsfb/panel.hpp"  // percentile

namespace tsfb {

void TokenizerConfig::validate() const {
    if (B < 2) throw ConfigError("tokenizer: B must be >= 2");
    if (!(low < high)) throw ConfigError("tokenizer: low must be < high");
    if (mode == Mode::dynamic) {
        if (!dynamic_bounds) throw ConfigError("tokenizer: dynamic mode needs fitted bounds");
        if (!(dynamic_bounds->first < dynamic_bounds->second))
            throw ConfigError("tokenizer: dynamic bounds must satisfy low < high");
    }
}

double TokenizerConfig::lo() const {
    switch (mode) {
        case Mode::static_range: return low;
        case Mode::restricted: return -2.0;
        case Mode::dynamic:
            if (!dynamic_bounds) throw ConfigError("tokenizer: dynamic mode needs fitted bounds");
            return dynamic_bounds->first;
    }
    return low;
}

double TokenizerConfig::hi() const {
    switch (mode) {
        case Mode::static_range: return high;
        case Mode::restricted: return 2.0;
        case Mode::dynamic:
            if (!dynamic_bounds) throw ConfigError("tokenizer: dynamic mode needs fitted bounds");
            return dynamic_bounds->second;
    }
    return high;
}

std::pair<double, std::vector<double>> mean_scale(const std::vector<double>& context) {
    if (context.empty()) throw DataError("mean_scale: empty context");
    double s = 0.0;
    for (double x : context) {
        if (!std::isfinite(x)) throw DataError("mean_scale: non-finite input");
        s += std::fabs(x);
    }
    s /= double(context.size());
    if (s == 0.0) s = 1.0;
    std::vector<double> scaled(context.size());
    for (size_t i = 0; i < context.size(); ++i) scaled[i] = context[i] / s;
    return {s, std::move(scaled)};
}

int quantize(double x_scaled, const TokenizerConfig& cfg) {
    cfg.validate();
    double w = cfg.bin_width();
    // nearest center with half-up rounding == half-open bin intervals
    long t = 1 + long(std::floor((x_scaled - cfg.lo()) / w + 0.5));
    return int(std::clamp(t, 1l, long(cfg.B)));
}

double bin_center(int token, const TokenizerConfig& cfg) {
    if (token < 1 || token > cfg.B)
        throw DataError("dequantize: token " + std::to_string(token) + " outside [1, B]");
    return cfg.lo() + double(token - 1) * cfg.bin_width();
}

double dequantize(int token, double s, const TokenizerConfig& cfg) {
    cfg.validate();
    if (!(s > 0)) throw DataError("dequantize: scale must be positive");
    return bin_center(token, cfg) * s;
}

std::pair<double, double> fit_dynamic_bounds(const std::vector<double>& values) {
    std::vector<double> finite;
    for (double v : values)
        if (std::isfinite(v)) finite.push_back(v);
    if (finite.size() < 20)
        throw ConfigError("fit_dynamic_bounds: need at least 20 finite values");
    double p5 = percentile(finite, 5.0), p95 = percentile(finite, 95.0);
    if (!(p5 < p95))
        throw ConfigError("fit_dynamic_bounds: degenerate bounds (p5 == p95)");
    return {p5, p95};
}

std::pair<double, double> point_and_direction(const std::vector<double>& samples) {
    if (samples.empty()) throw DataError("point_and_direction: empty samples");
    double mean = 0.0;
    int up = 0;
    for (double s : samples) {
        mean += s;
        up += s > 0.0;
    }
    return {mean / double(samples.size()), double(up) / double(samples.size())};
}

nlohmann::json ChronosConfig::to_json() const {
    nlohmann::json j;
    j["B"] = tok.B;
    j["low"] = tok.low;
    j["high"] = tok.high;
    j["mode"] = tok.mode == TokenizerConfig::Mode::static_range ? "static"
                : tok.mode == TokenizerConfig::Mode::restricted ? "restricted"
                                                                : "dynamic";
    if (tok.dynamic_bounds)
        j["dynamic_bounds"] = {tok.dynamic_bounds->first, tok.dynamic_bounds->second};
    j["n_layers"] = n_layers;
    j["n_heads"] = n_heads;
    j["model_dim"] = model_dim;
    j["head_dim"] = head_dim;
    j["ffn_dim"] = ffn_dim;
    j["max_context"] = max_context;
    return j;
}

ChronosConfig ChronosConfig::from_json(const nlohmann::json& j) {
    ChronosConfig c;
    c.tok.B = j.at("B");
    c.tok.low = j.at("low");
    c.tok.high = j.at("high");
    std::string m = j.at("mode");
    c.tok.mode = m == "static"       ? TokenizerConfig::Mode::static_range
                 : m == "restricted" ? TokenizerConfig::Mode::restricted
                                     : TokenizerConfig::Mode::dynamic;
    if (j.contains("dynamic_bounds"))
        c.tok.dynamic_bounds = {j["dynamic_bounds"][0], j["dynamic_bounds"][1]};
    c.n_layers = j.at("n_layers");
    c.n_heads = j.at("n_heads");
    c.model_dim = j.at("model_dim");
    c.head_dim = j.at("head_dim");
    c.ffn_dim = j.at("ffn_dim");
    c.max_context = j.at("max_context");
    return c;
}

ChronosModel::ChronosModel(const ChronosConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.tok.validate();
    Rng rng(seed);
    params_.create("tok_emb", cfg.tok.B, cfg.model_dim, 0.02, rng);
    params_.create("pos_emb", cfg.max_context, cfg.model_dim, 0.02, rng);
    params_.create("head_w", cfg.model_dim, cfg.tok.B, 0.02, rng);
    params_.create("head_b", 1, cfg.tok.B, 0.0, rng);
    params_.create("ln_f_g", 1, cfg.model_dim, 0.0, rng);
    params_.create("ln_f_b", 1, cfg.model_dim, 0.0, rng);
    for (auto& g : params_.get("ln_f_g")->val.data) g = 1.0;
    AttentionConfig att{cfg.n_heads, cfg.model_dim, cfg.head_dim, true};
    stack_ = TransformerStack(params_, "dec", cfg.n_layers, att, cfg.ffn_dim, rng);
}

Var ChronosModel::logits(const std::vector<int>& tokens0) const {
    if (tokens0.empty()) throw DataError("chronos: empty token sequence");
    if (int(tokens0.size()) > cfg_.max_context)
        throw DimensionError("chronos: context exceeds max_context");
    std::vector<int> pos(tokens0.size());
    for (size_t i = 0; i < pos.size(); ++i) pos[i] = int(i);
    Var x = add(embedding(params_.get("tok_emb"), tokens0),
                embedding(params_.get("pos_emb"), pos));
    Var h = stack_.forward(x);
    h = layernorm_rows(h);
    h = mul_rowvec(h, params_.get("ln_f_g"));
    h = add_rowvec(h, params_.get("ln_f_b"));
    return add_rowvec(matmul(h, params_.get("head_w")), params_.get("head_b"));
}

TrainResult ChronosModel::train(const std::function<std::vector<double>(int)>& window_source,
                                const TrainSchedule& schedule, uint64_t /*seed*/) {
    return train_loop(params_, schedule, [&](int step) -> Var {
        std::vector<double> window = window_source(step);
        if (window.size() < 2) throw TrainingError("chronos: training window shorter than 2");
        if (int(window.size()) > cfg_.max_context + 1)
            window.erase(window.begin(),
                         window.end() - (cfg_.max_context + 1));
        auto [s, scaled] = mean_scale(window);
        std::vector<int> toks(scaled.size());
        for (size_t i = 0; i < scaled.size(); ++i) toks[i] = quantize(scaled[i], cfg_.tok);
        std::vector<int> input(toks.begin(), toks.end() - 1);
        std::vector<int> target;  // 0-based for the CE op
        for (size_t i = 1; i < toks.size(); ++i) target.push_back(toks[i] - 1);
        for (auto& t : input) t -= 1;
        return cross_entropy_logits(logits(input), target);
    });
}

std::vector<double> ChronosModel::forecast_distribution(const std::vector<double>& context,
                                                        int n_samples, Rng& rng) const {
    if (context.empty()) throw DataError("chronos: empty forecast context");
    std::vector<double> ctx = context;
    if (int(ctx.size()) > cfg_.max_context)
        ctx.erase(ctx.begin(), ctx.end() - cfg_.max_context);
    auto [s, scaled] = mean_scale(ctx);
    std::vector<int> toks(scaled.size());
    for (size_t i = 0; i < scaled.size(); ++i) toks[i] = quantize(scaled[i], cfg_.tok) - 1;
    Var lg = logits(toks);
    int T = lg->val.rows;
    // categorical over the final position
    std::vector<double> probs(cfg_.tok.B);
    double mx = lg->val.at(T - 1, 0);
    for (int j = 1; j < cfg_.tok.B; ++j) mx = std::max(mx, lg->val.at(T - 1, j));
    double sum = 0.0;
    for (int j = 0; j < cfg_.tok.B; ++j) {
        probs[j] = std::exp(lg->val.at(T - 1, j) - mx);
        sum += probs[j];
    }
    for (auto& p : probs) p /= sum;
    std::vector<double> out;
    out.resize(size_t(n_samples));
    for (int k = 0; k < n_samples; ++k) {
        double u = rng.uniform(), acc = 0.0;
        int tok = cfg_.tok.B;
        for (int j = 0; j < cfg_.tok.B; ++j) {
            acc += probs[j];
            if (u < acc) {
                tok = j + 1;
                break;
            }
        }
        out[k] = dequantize(tok, s, cfg_.tok);
    }
    return out;
}

Checkpoint ChronosModel::to_checkpoint(nlohmann::json extra) const {
    nlohmann::json desc = std::move(extra);
    desc["model"] = "chronos";
    desc["config"] = cfg_.to_json();
    return Checkpoint::from_store(params_, std::move(desc));
}

ChronosModel ChronosModel::from_checkpoint(const Checkpoint& ck) {
    if (ck.descriptor.value("model", "") != "chronos")
        throw DataError("checkpoint is not a chronos model");
    ChronosModel m(ChronosConfig::from_json(ck.descriptor.at("config")), 0);
    ck.restore_into(m.params_);
    return m;
}

}  // namespace tsfb
