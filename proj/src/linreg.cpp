#include "tsfb/linreg.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <iostream>

namespace tsfb {

double huber_loss(double r, double delta) {
    if (!(delta > 0)) throw ConfigError("huber_loss: delta must be positive");
    double a = std::fabs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

namespace {

// psi = d huber / d r
double huber_psi(double r, double delta) {
    if (r > delta) return delta;
    if (r < -delta) return -delta;
    return r;
}

struct Standardizer {
    std::vector<double> mean, sd;

    void fit(const Tensor& X) {
        int H = X.rows, C = X.cols;
        mean.assign(C, 0.0);
        sd.assign(C, 0.0);
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < C; ++j) mean[j] += X.at(i, j);
        for (auto& m : mean) m /= double(H);
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < C; ++j) {
                double d = X.at(i, j) - mean[j];
                sd[j] += d * d;
            }
        for (auto& s : sd) {
            s = std::sqrt(s / double(H));
            if (s == 0.0) s = 1.0;  // constant feature: coefficient stays 0
        }
    }

    Tensor apply(const Tensor& X) const {
        Tensor Z = X;
        for (int i = 0; i < X.rows; ++i)
            for (int j = 0; j < X.cols; ++j) Z.at(i, j) = (X.at(i, j) - mean[j]) / sd[j];
        return Z;
    }
};

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

}  // namespace

double LinearModel::predict(const std::vector<double>& x) const {
    if (x.size() != theta.size())
        throw DimensionError("linear predict: feature length mismatch");
    double acc = intercept;
    for (size_t i = 0; i < x.size(); ++i) acc += theta[i] * x[i];
    return acc;
}

nlohmann::json LinearModel::to_json() const {
    return {{"theta", theta},           {"intercept", intercept},
            {"lambda1", penalty.lambda1}, {"lambda2", penalty.lambda2},
            {"delta", delta},           {"x_mean", x_mean},
            {"x_sd", x_sd},             {"theta_std", theta_std},
            {"converged", converged}};
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
    LinearModel m;
    m.theta = j.at("theta").get<std::vector<double>>();
    m.intercept = j.at("intercept");
    m.penalty.lambda1 = j.at("lambda1");
    m.penalty.lambda2 = j.at("lambda2");
    m.delta = j.at("delta");
    m.x_mean = j.at("x_mean").get<std::vector<double>>();
    m.x_sd = j.at("x_sd").get<std::vector<double>>();
    m.theta_std = j.at("theta_std").get<std::vector<double>>();
    m.converged = j.at("converged");
    return m;
}

LinearModel fit_huber_linear(const Tensor& X, const std::vector<double>& y,
                             const PenaltySpec& penalty, double delta, int max_iter,
                             double tol) {
    const int H = X.rows, C = X.cols;
    if (H < 2) throw DataError("fit_huber_linear: need at least 2 rows");
    if (int(y.size()) != H) throw DimensionError("fit_huber_linear: X/y length mismatch");
    for (double v : X.data)
        if (!std::isfinite(v)) throw DataError("fit_huber_linear: non-finite feature");
    for (double v : y)
        if (!std::isfinite(v)) throw DataError("fit_huber_linear: non-finite target");

    Standardizer sc;
    sc.fit(X);
    Tensor Z = sc.apply(X);

    std::vector<double> theta(C, 0.0);
    double b = 0.0;
    const double l1 = penalty.lambda1, l2 = penalty.lambda2;

    // smooth part g = mean huber + (l2/2)||theta||^2; l1 handled by prox
    auto smooth_val = [&](const std::vector<double>& th, double bb) {
        double acc = 0.0;
        for (int i = 0; i < H; ++i) {
            double pred = bb;
            for (int j = 0; j < C; ++j) pred += th[j] * Z.at(i, j);
            acc += huber_loss(y[i] - pred, delta);
        }
        acc /= double(H);
        for (double t : th) acc += 0.5 * l2 * t * t;
        return acc;
    };
    auto full_val = [&](const std::vector<double>& th, double bb) {
        double acc = smooth_val(th, bb);
        for (double t : th) acc += l1 * std::fabs(t);
        return acc;
    };
    auto smooth_grad = [&](const std::vector<double>& th, double bb,
                           std::vector<double>& gth, double& gb) {
        gth.assign(C, 0.0);
        gb = 0.0;
        for (int i = 0; i < H; ++i) {
            double pred = bb;
            for (int j = 0; j < C; ++j) pred += th[j] * Z.at(i, j);
            double p = huber_psi(y[i] - pred, delta);
            gb -= p;
            for (int j = 0; j < C; ++j) gth[j] -= p * Z.at(i, j);
        }
        for (int j = 0; j < C; ++j) gth[j] = gth[j] / double(H) + l2 * th[j];
        gb /= double(H);
    };

    double step = 1.0;
    double cur = smooth_val(theta, b);
    std::vector<double> gth;
    double gb = 0.0;
    int it = 0;
    bool converged = false;
    for (; it < max_iter; ++it) {
        smooth_grad(theta, b, gth, gb);
        std::vector<double> nth(C);
        double nb = 0.0;
        double nval = 0.0;
        // backtracking on the proximal step
        while (true) {
            for (int j = 0; j < C; ++j)
                nth[j] = soft_threshold(theta[j] - step * gth[j], step * l1);
            nb = b - step * gb;  // intercept unpenalized
            nval = smooth_val(nth, nb);
            double quad = cur;
            double dist = 0.0;
            for (int j = 0; j < C; ++j) {
                double d = nth[j] - theta[j];
                quad += gth[j] * d;
                dist += d * d;
            }
            double db = nb - b;
            quad += gb * db;
            dist += db * db;
            quad += dist / (2.0 * step);
            if (nval <= quad + 1e-15 || step < 1e-14) break;
            step *= 0.5;
        }
        // optimality: proximal-gradient mapping norm
        double move = 0.0;
        for (int j = 0; j < C; ++j) move += (nth[j] - theta[j]) * (nth[j] - theta[j]);
        move += (nb - b) * (nb - b);
        move = std::sqrt(move) / step;
        theta = std::move(nth);
        b = nb;
        cur = nval;
        step *= 1.2;  // cautious growth keeps backtracking cheap
        if (move <= tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        std::cerr << "warning: fit_huber_linear stopped at max_iter without reaching tol\n";

    LinearModel m;
    m.penalty = penalty;
    m.delta = delta;
    m.x_mean = sc.mean;
    m.x_sd = sc.sd;
    m.theta_std = theta;
    m.converged = converged;
    m.objective = full_val(theta, b);
    m.iterations = it;
    // back to original units
    m.theta.assign(C, 0.0);
    m.intercept = b;
    for (int j = 0; j < C; ++j) {
        m.theta[j] = theta[j] / sc.sd[j];
        m.intercept -= theta[j] * sc.mean[j] / sc.sd[j];
    }
    return m;
}

double PCRModel::predict(const std::vector<double>& x) const {
    if (int(x.size()) != Vk.rows) throw DimensionError("pcr predict: feature length mismatch");
    std::vector<double> z(size_t(k), 0.0);
    for (int j = 0; j < Vk.rows; ++j) {
        double v = (x[j] - x_mean[j]) / x_sd[j];
        for (int c = 0; c < k; ++c) z[c] += Vk.at(j, c) * v;
    }
    return reg.predict(z);
}

nlohmann::json PCRModel::to_json() const {
    return {{"k", k},
            {"v_rows", Vk.rows},
            {"v_data", Vk.data},
            {"x_mean", x_mean},
            {"x_sd", x_sd},
            {"reg", reg.to_json()}};
}

PCRModel PCRModel::from_json(const nlohmann::json& j) {
    PCRModel m;
    m.k = j.at("k");
    int rows = j.at("v_rows");
    m.Vk = Tensor(rows, m.k, j.at("v_data").get<std::vector<double>>());
    m.x_mean = j.at("x_mean").get<std::vector<double>>();
    m.x_sd = j.at("x_sd").get<std::vector<double>>();
    m.reg = LinearModel::from_json(j.at("reg"));
    return m;
}

PCRModel fit_pcr(const Tensor& X, const std::vector<double>& y, int k, double delta) {
    const int H = X.rows, C = X.cols;
    if (k < 1 || k > std::min(H, C)) throw ConfigError("fit_pcr: k out of range");
    Standardizer sc;
    sc.fit(X);
    Tensor Z = sc.apply(X);

    Eigen::MatrixXd Ze(H, C);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < C; ++j) Ze(i, j) = Z.at(i, j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ze, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    double cutoff = sv.size() ? sv(0) * 1e-12 : 0.0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) ++rank;
    if (rank < k) {
        std::cerr << "warning: fit_pcr reducing k from " << k << " to rank " << rank << "\n";
        k = std::max(1, rank);
    }

    PCRModel m;
    m.k = k;
    m.x_mean = sc.mean;
    m.x_sd = sc.sd;
    m.Vk = Tensor(C, k);
    for (int j = 0; j < C; ++j)
        for (int c = 0; c < k; ++c) m.Vk.at(j, c) = svd.matrixV()(j, c);

    Tensor scores(H, k);
    for (int i = 0; i < H; ++i)
        for (int c = 0; c < k; ++c) {
            double acc = 0.0;
            for (int j = 0; j < C; ++j) acc += Z.at(i, j) * m.Vk.at(j, c);
            scores.at(i, c) = acc;
        }
    m.reg = fit_huber_linear(scores, y, PenaltySpec::none(), delta);
    return m;
}

}  // namespace tsfb
