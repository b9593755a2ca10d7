#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "tsfb/checkpoint.hpp"
#include "tsfb/nn.hpp"

namespace tsfb {

struct TokenizerConfig {
    enum class Mode { static_range, restricted, dynamic };
    int B = 256;
    double low = -15.0;
    double high = 15.0;
    Mode mode = Mode::static_range;
    std::optional<std::pair<double, double>> dynamic_bounds;  // per training vintage

    void validate() const;
    // bounds actually used for binning under the current mode
    double lo() const;
    double hi() const;
    double bin_width() const { return (hi() - lo()) / double(B - 1); }
};

// s = mean |x|, fallback 1 when the context is all zero
std::pair<double, std::vector<double>> mean_scale(const std::vector<double>& context);

// token in [1, B]; centers c_j = lo + (j-1)*(hi-lo)/(B-1), edges at midpoints,
// saturating at both ends
int quantize(double x_scaled, const TokenizerConfig& cfg);
double bin_center(int token, const TokenizerConfig& cfg);
double dequantize(int token, double s, const TokenizerConfig& cfg);

// linear-interpolation p5/p95 of >= 20 finite scaled values
std::pair<double, double> fit_dynamic_bounds(const std::vector<double>& values);

// (mean forecast, fraction of samples > 0)
std::pair<double, double> point_and_direction(const std::vector<double>& samples);

struct ChronosConfig {
    TokenizerConfig tok;
    int n_layers = 2;
    int n_heads = 2;
    int model_dim = 64;
    int head_dim = 32;
    int ffn_dim = 128;
    int max_context = 512;

    nlohmann::json to_json() const;
    static ChronosConfig from_json(const nlohmann::json& j);
};

// Decoder-only token model: embedding + learned positions, causal stack,
// softmax over bin tokens.
class ChronosModel {
public:
    ChronosModel(const ChronosConfig& cfg, uint64_t seed);
    ChronosModel(ChronosModel&& o) noexcept
        : cfg_(std::move(o.cfg_)), params_(std::move(o.params_)), stack_(std::move(o.stack_)) {
        stack_.rebind(&params_);
    }
    ChronosModel& operator=(ChronosModel&& o) noexcept {
        cfg_ = std::move(o.cfg_);
        params_ = std::move(o.params_);
        stack_ = std::move(o.stack_);
        stack_.rebind(&params_);
        return *this;
    }
    ChronosModel(const ChronosModel&) = delete;
    ChronosModel& operator=(const ChronosModel&) = delete;

    const ChronosConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }

    // T x B logits for a 0-based token id sequence
    Var logits(const std::vector<int>& tokens0) const;

    // windows supply raw values; each is tokenized with its own mean scale and
    // trained with next-token cross-entropy
    TrainResult train(const std::function<std::vector<double>(int step)>& window_source,
                      const TrainSchedule& schedule, uint64_t seed);

    // N categorical next-token draws, dequantized; defaults N=20
    std::vector<double> forecast_distribution(const std::vector<double>& context, int n_samples,
                                              Rng& rng) const;

    Checkpoint to_checkpoint(nlohmann::json extra = {}) const;
    static ChronosModel from_checkpoint(const Checkpoint& ck);

private:
    ChronosConfig cfg_;
    ParamStore params_;
    TransformerStack stack_;
};

}  // namespace tsfb
