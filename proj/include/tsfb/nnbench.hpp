#pragma once

#include <vector>

#include "tsfb/checkpoint.hpp"
#include "tsfb/nn.hpp"

namespace tsfb {

struct FnnSpec {
    int input_dim = 0;
    int hidden_units = 32;  // 8 = NN-S, 32 = NN-L; 128/512 variants
    double dropout_p = 0.2;
    double l1_lambda = 1e-4;
    int epochs = 30;
    int patience = 5;
    double lr = 1e-3;
    int batch_size = 256;
    double scheduler_factor = 0.5;
    int scheduler_patience = 2;
    double min_lr = 1e-5;

    void validate() const;
    nlohmann::json to_json() const;
    static FnnSpec from_json(const nlohmann::json& j);
};

// Single-hidden-layer regressor: Linear -> BatchNorm -> ReLU -> Dropout -> Linear.
// Inputs are standardized with training-set statistics held by the model.
class FnnModel {
public:
    FnnModel(const FnnSpec& spec, uint64_t seed);

    const FnnSpec& spec() const { return spec_; }
    ParamStore& params() { return params_; }
    const std::vector<double>& x_mean() const { return x_mean_; }
    const std::vector<double>& x_sd() const { return x_sd_; }
    Tensor& running_mean() { return running_mean_; }
    Tensor& running_var() { return running_var_; }
    void set_standardization(std::vector<double> mean, std::vector<double> sd);

    // x is batch x input_dim in standardized units; inverted dropout, so
    // inference mode is the exact identity on the hidden activation
    Var forward(const Var& x, bool training, Rng* dropout_rng = nullptr);

    // raw-unit input; standardizes, then eval-mode forward
    double predict(const std::vector<double>& x);
    std::vector<double> predict_batch(const Tensor& X);

    // training objective: MSE + l1_lambda * sum |w| over weight matrices only
    Var train_loss(const Var& x, const Var& y, Rng& dropout_rng);

    Checkpoint to_checkpoint(nlohmann::json extra = {}) const;
    static FnnModel from_checkpoint(const Checkpoint& ck);

private:
    FnnSpec spec_;
    ParamStore params_;
    Tensor running_mean_, running_var_;  // batch-norm eval statistics
    std::vector<double> x_mean_, x_sd_;
};

struct FnnTrainResult {
    int epochs_completed = 0;
    int best_epoch = -1;  // -1: never evaluated (epochs == 0)
    double best_val_loss = 0.0;
    std::vector<double> val_losses;
    double final_lr = 0.0;
    bool aborted_nan = false;
};

// 90/10 chronological split, Adam, plateau lr halving, early stopping with
// best-validation restore. Validation loss is plain MSE in eval mode.
FnnTrainResult fnn_train(FnnModel& model, const Tensor& X, const std::vector<double>& y,
                         uint64_t seed);

}  // namespace tsfb
