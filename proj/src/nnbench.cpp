#include "tsfb/nnbench.hpp"

#include <algorithm>
#include <cmath>

namespace tsfb {

void FnnSpec::validate() const {
    if (input_dim < 1) throw ConfigError("fnn: input_dim must be positive");
    if (hidden_units < 1) throw ConfigError("fnn: hidden_units must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw ConfigError("fnn: dropout_p must be in [0, 1)");
    if (epochs < 0 || patience < 1 || batch_size < 1)
        throw ConfigError("fnn: bad training schedule");
    if (!(lr > 0.0) || l1_lambda < 0.0) throw ConfigError("fnn: bad lr or l1_lambda");
}

nlohmann::json FnnSpec::to_json() const {
    return {{"input_dim", input_dim},
            {"hidden_units", hidden_units},
            {"dropout_p", dropout_p},
            {"l1_lambda", l1_lambda},
            {"epochs", epochs},
            {"patience", patience},
            {"lr", lr},
            {"batch_size", batch_size},
            {"scheduler_factor", scheduler_factor},
            {"scheduler_patience", scheduler_patience},
            {"min_lr", min_lr}};
}

FnnSpec FnnSpec::from_json(const nlohmann::json& j) {
    FnnSpec s;
    s.input_dim = j.at("input_dim");
    s.hidden_units = j.at("hidden_units");
    s.dropout_p = j.at("dropout_p");
    s.l1_lambda = j.at("l1_lambda");
    s.epochs = j.at("epochs");
    s.patience = j.at("patience");
    s.lr = j.at("lr");
    s.batch_size = j.at("batch_size");
    s.scheduler_factor = j.at("scheduler_factor");
    s.scheduler_patience = j.at("scheduler_patience");
    s.min_lr = j.at("min_lr");
    return s;
}

FnnModel::FnnModel(const FnnSpec& spec, uint64_t seed) : spec_(spec) {
    spec_.validate();
    Rng rng(seed);
    const int C = spec_.input_dim, H = spec_.hidden_units;
    params_.create("w1", C, H, 1.0 / std::sqrt(double(C)), rng);
    params_.create("b1", 1, H, 0.0, rng);
    Var bn_g = params_.create("bn_g", 1, H, 0.0, rng);
    for (auto& v : bn_g->val.data) v = 1.0;
    params_.create("bn_b", 1, H, 0.0, rng);
    params_.create("w2", H, 1, 1.0 / std::sqrt(double(H)), rng);
    params_.create("b2", 1, 1, 0.0, rng);
    running_mean_ = Tensor::zeros(1, H);
    running_var_ = Tensor(1, H, std::vector<double>(size_t(H), 1.0));
    x_mean_.assign(size_t(C), 0.0);
    x_sd_.assign(size_t(C), 1.0);
}

void FnnModel::set_standardization(std::vector<double> mean, std::vector<double> sd) {
    if (int(mean.size()) != spec_.input_dim || int(sd.size()) != spec_.input_dim)
        throw DimensionError("fnn: standardization length mismatch");
    x_mean_ = std::move(mean);
    x_sd_ = std::move(sd);
}

Var FnnModel::forward(const Var& x, bool training, Rng* dropout_rng) {
    if (x->val.cols != spec_.input_dim) throw DimensionError("fnn forward: input width");
    Var h = add_rowvec(matmul(x, params_.get("w1")), params_.get("b1"));
    h = batchnorm_cols(h, params_.get("bn_g"), params_.get("bn_b"), running_mean_,
                       running_var_, 0.1, training);
    h = relu(h);
    if (training && spec_.dropout_p > 0.0) {
        if (!dropout_rng) throw ConfigError("fnn forward: training dropout needs an rng");
        Tensor mask(h->val.rows, h->val.cols);
        double keep = 1.0 - spec_.dropout_p;
        for (auto& m : mask.data) m = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
        h = mul(h, constant(std::move(mask)));
    }
    return add_rowvec(matmul(h, params_.get("w2")), params_.get("b2"));
}

double FnnModel::predict(const std::vector<double>& x) {
    if (int(x.size()) != spec_.input_dim) throw DimensionError("fnn predict: input width");
    Tensor z(1, spec_.input_dim);
    for (int j = 0; j < spec_.input_dim; ++j) z.at(0, j) = (x[j] - x_mean_[j]) / x_sd_[j];
    return forward(constant(std::move(z)), false)->val.at(0, 0);
}

std::vector<double> FnnModel::predict_batch(const Tensor& X) {
    if (X.cols != spec_.input_dim) throw DimensionError("fnn predict: input width");
    Tensor Z = X;
    for (int i = 0; i < X.rows; ++i)
        for (int j = 0; j < X.cols; ++j) Z.at(i, j) = (X.at(i, j) - x_mean_[j]) / x_sd_[j];
    Var out = forward(constant(std::move(Z)), false);
    std::vector<double> preds(size_t(X.rows));
    for (int i = 0; i < X.rows; ++i) preds[i] = out->val.at(i, 0);
    return preds;
}

Var FnnModel::train_loss(const Var& x, const Var& y, Rng& dropout_rng) {
    Var pred = forward(x, true, &dropout_rng);
    Var loss = mse(pred, y);
    if (spec_.l1_lambda > 0.0) {
        // l1 on weight matrices only, not biases or batch-norm affine
        loss = add(loss, l1_penalty(params_.get("w1"), spec_.l1_lambda));
        loss = add(loss, l1_penalty(params_.get("w2"), spec_.l1_lambda));
    }
    return loss;
}

Checkpoint FnnModel::to_checkpoint(nlohmann::json extra) const {
    nlohmann::json desc = std::move(extra);
    desc["model"] = "fnn";
    desc["spec"] = spec_.to_json();
    desc["x_mean"] = x_mean_;
    desc["x_sd"] = x_sd_;
    desc["bn_running_mean"] = running_mean_.data;
    desc["bn_running_var"] = running_var_.data;
    return Checkpoint::from_store(params_, std::move(desc));
}

FnnModel FnnModel::from_checkpoint(const Checkpoint& ck) {
    if (ck.descriptor.at("model") != "fnn")
        throw DataError("checkpoint is not an fnn model");
    FnnModel m(FnnSpec::from_json(ck.descriptor.at("spec")), 0);
    ck.restore_into(m.params_);
    m.x_mean_ = ck.descriptor.at("x_mean").get<std::vector<double>>();
    m.x_sd_ = ck.descriptor.at("x_sd").get<std::vector<double>>();
    m.running_mean_.data = ck.descriptor.at("bn_running_mean").get<std::vector<double>>();
    m.running_var_.data = ck.descriptor.at("bn_running_var").get<std::vector<double>>();
    if (int(m.running_mean_.data.size()) != m.spec_.hidden_units ||
        int(m.running_var_.data.size()) != m.spec_.hidden_units)
        throw DimensionError("fnn checkpoint: running-stat length mismatch");
    return m;
}

namespace {

// snapshot / restore trainable parameter values for best-epoch rollback
std::vector<std::pair<std::string, Tensor>> snapshot(const ParamStore& store) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [name, v] : store.all()) out.emplace_back(name, v->val);
    return out;
}

void restore(ParamStore& store, const std::vector<std::pair<std::string, Tensor>>& snap) {
    for (const auto& [name, t] : snap) store.get(name)->val = t;
}

}  // namespace

FnnTrainResult fnn_train(FnnModel& model, const Tensor& X, const std::vector<double>& y,
                         uint64_t seed) {
    const FnnSpec& spec = model.spec();
    const int H = X.rows;
    if (H < 1) throw DataError("fnn_train: need at least 1 sample");
    if (int(y.size()) != H) throw DimensionError("fnn_train: X/y length mismatch");
    if (X.cols != spec.input_dim) throw DimensionError("fnn_train: input width");

    // train-set standardization recorded on the model
    std::vector<double> mean(size_t(X.cols), 0.0), sd(size_t(X.cols), 0.0);
    int n_train = std::max(1, H - int(std::floor(0.1 * H)));
    for (int i = 0; i < n_train; ++i)
        for (int j = 0; j < X.cols; ++j) mean[size_t(j)] += X.at(i, j);
    for (auto& m : mean) m /= double(n_train);
    for (int i = 0; i < n_train; ++i)
        for (int j = 0; j < X.cols; ++j) {
            double d = X.at(i, j) - mean[size_t(j)];
            sd[size_t(j)] += d * d;
        }
    for (auto& s : sd) {
        s = std::sqrt(s / double(n_train));
        if (s == 0.0) s = 1.0;
    }
    model.set_standardization(mean, sd);

    Tensor Z(H, X.cols);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < X.cols; ++j)
            Z.at(i, j) = (X.at(i, j) - mean[size_t(j)]) / sd[size_t(j)];

    int n_val = H - n_train;
    Rng rng(seed);
    Adam adam({spec.lr});
    FnnTrainResult res;
    res.final_lr = spec.lr;

    auto val_mse = [&]() {
        if (n_val == 0) return 0.0;
        Tensor Zv(n_val, X.cols);
        for (int i = 0; i < n_val; ++i)
            for (int j = 0; j < X.cols; ++j) Zv.at(i, j) = Z.at(n_train + i, j);
        Var out = model.forward(constant(std::move(Zv)), false);
        double acc = 0;
        for (int i = 0; i < n_val; ++i) {
            double d = out->val.at(i, 0) - y[size_t(n_train + i)];
            acc += d * d;
        }
        return acc / double(n_val);
    };

    auto best = snapshot(model.params());
    Tensor best_rm = model.running_mean(), best_rv = model.running_var();
    double best_val = 1e300;
    int since_best = 0, since_sched = 0;

    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        // deterministic shuffle per epoch
        Rng erng = rng.fork(uint64_t(epoch));
        for (int i = n_train - 1; i > 0; --i)
            std::swap(order[i], order[int(erng.below(uint64_t(i + 1)))]);

        bool nan_abort = false;
        for (int start = 0; start < n_train; start += spec.batch_size) {
            int bs = std::min(spec.batch_size, n_train - start);
            Tensor xb(bs, X.cols), yb(bs, 1);
            for (int i = 0; i < bs; ++i) {
                int r = order[start + i];
                for (int j = 0; j < X.cols; ++j) xb.at(i, j) = Z.at(r, j);
                yb.at(i, 0) = y[size_t(r)];
            }
            model.params().zero_grad();
            Var loss = model.train_loss(constant(std::move(xb)), constant(std::move(yb)), erng);
            if (!std::isfinite(loss->val.at(0, 0))) {
                nan_abort = true;
                break;
            }
            backward(loss);
            adam.step(model.params());
        }
        if (nan_abort) {
            res.aborted_nan = true;
            break;
        }

        ++res.epochs_completed;
        double vl = val_mse();
        res.val_losses.push_back(vl);
        if (vl < best_val) {
            // strict best for parameter restore
            best = snapshot(model.params());
            best_rm = model.running_mean();
            best_rv = model.running_var();
            res.best_epoch = epoch;
        }
        // plateau/patience counters use a relative improvement threshold so
        // sub-0.01% jitter still counts as a plateau and lets the lr anneal
        if (vl < best_val * (1.0 - 1e-4)) {
            best_val = std::min(best_val, vl);
            since_best = 0;
            since_sched = 0;
        } else {
            best_val = std::min(best_val, vl);
            ++since_best;
            ++since_sched;
            if (since_sched >= spec.scheduler_patience) {
                adam.config().lr =
                    std::max(spec.min_lr, adam.config().lr * spec.scheduler_factor);
                res.final_lr = adam.config().lr;
                since_sched = 0;
            }
            if (since_best >= spec.patience) break;
        }
    }

    if (res.best_epoch >= 0) {
        restore(model.params(), best);
        model.running_mean() = best_rm;
        model.running_var() = best_rv;
    }
    res.best_val_loss = res.best_epoch >= 0 ? best_val : 0.0;
    return res;
}

}  // namespace tsfb
