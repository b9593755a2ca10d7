#pragma once

#include <functional>
#include <vector>

#include "tsfb/checkpoint.hpp"
#include "tsfb/nn.hpp"

namespace tsfb {

struct PatchConfig {
    int input_patch_len = 32;  // variants 8, 128
    int output_patch_len = 1;
    int embed_dim = 128;
};

struct PatchSeries {
    Tensor patches;   // M x L, left-padded with zeros
    Tensor pad_mask;  // M x L, 1 = real value, 0 = padding
    int context_len = 0;

    int n_patches() const { return patches.rows; }
};

PatchSeries patchify(const std::vector<double>& context, const PatchConfig& cfg);

// exact inverse of patchify on the unpadded region
std::vector<double> unpatchify(const PatchSeries& ps);

// up iff forecast > 0; exact zero counts as down
bool sign_direction(double point_forecast);

struct TimesFmConfig {
    PatchConfig patch;
    int n_layers = 2;
    int n_heads = 2;
    int head_dim = 64;  // n_heads * head_dim == patch.embed_dim
    int ffn_dim = 256;
    int max_patches = 64;
    double mask_prob = 0.15;

    nlohmann::json to_json() const;
    static TimesFmConfig from_json(const nlohmann::json& j);
};

// Deterministic patch model: residual-MLP patch encoder, causal stack over
// patches, residual-MLP horizon decoder. Contexts are standardized per window
// (mean/sd recorded in the descriptor convention and inverted on output).
class TimesFmModel {
public:
    TimesFmModel(const TimesFmConfig& cfg, uint64_t seed);
    TimesFmModel(TimesFmModel&& o) noexcept
        : cfg_(std::move(o.cfg_)), params_(std::move(o.params_)), stack_(std::move(o.stack_)) {
        stack_.rebind(&params_);
    }
    TimesFmModel& operator=(TimesFmModel&& o) noexcept {
        cfg_ = std::move(o.cfg_);
        params_ = std::move(o.params_);
        stack_ = std::move(o.stack_);
        stack_.rebind(&params_);
        return *this;
    }
    TimesFmModel(const TimesFmModel&) = delete;
    TimesFmModel& operator=(const TimesFmModel&) = delete;

    const TimesFmConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }

    // M x output_patch_len predictions; row i predicts patch i+1.
    // patch_mask[i] != 0 marks a masked-out (zeroed) input patch.
    Var forward(const PatchSeries& ps, const std::vector<uint8_t>& patch_mask) const;

    // masked next-patch MSE over one batch of raw windows; sequences whose
    // mask leaves no prediction slot are re-drawn (counted in resampled)
    Var masked_train_loss(const std::vector<std::vector<double>>& batch, double mask_prob,
                          Rng& rng, int& resampled) const;

    TrainResult train(const std::function<std::vector<std::vector<double>>(int step)>& batches,
                      const TrainSchedule& schedule, uint64_t seed);

    // recursive rollout; steps=1 is the evaluation path
    std::vector<double> rolling_forecast(const std::vector<double>& context, int steps,
                                         int* model_calls = nullptr) const;

    Checkpoint to_checkpoint(nlohmann::json extra = {}) const;
    static TimesFmModel from_checkpoint(const Checkpoint& ck);

private:
    TimesFmConfig cfg_;
    ParamStore params_;
    TransformerStack stack_;
};

}  // namespace tsfb
