#include "tsfb/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include <omp.h>

namespace tsfb {

void grad_hess(const std::vector<double>& y, const std::vector<double>& yhat,
               std::vector<double>& g, std::vector<double>& h) {
    if (y.size() != yhat.size()) throw DimensionError("grad_hess: length mismatch");
    g.resize(y.size());
    h.assign(y.size(), 1.0);
    for (size_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(y[i]) || !std::isfinite(yhat[i]))
            throw DataError("grad_hess: non-finite input");
        g[i] = yhat[i] - y[i];
    }
}

namespace {

double split_score(double G, double H, double l) { return G * G / (H + l); }

// best split for a single feature column; returns gain <= 0 when none
SplitResult scan_feature(const Tensor& X, const std::vector<int>& rows,
                         const std::vector<double>& g, const std::vector<double>& h,
                         double l, double gamma, int feature) {
    std::vector<std::pair<double, int>> vals;
    vals.reserve(rows.size());
    for (int r : rows) vals.push_back({X.at(r, feature), r});
    std::sort(vals.begin(), vals.end());

    double G = 0, H = 0;
    for (int r : rows) {
        G += g[r];
        H += h[r];
    }
    double parent = split_score(G, H, l);

    SplitResult best;
    best.feature = feature;
    best.gain = 0.0;
    double GL = 0, HL = 0;
    bool found = false;
    for (size_t i = 0; i + 1 < vals.size(); ++i) {
        GL += g[vals[i].second];
        HL += h[vals[i].second];
        if (vals[i].first == vals[i + 1].first) continue;  // no boundary here
        double gain =
            0.5 * (split_score(GL, HL, l) + split_score(G - GL, H - HL, l) - parent) - gamma;
        double thr = 0.5 * (vals[i].first + vals[i + 1].first);
        if (!found || gain > best.gain || (gain == best.gain && thr < best.threshold)) {
            best.gain = gain;
            best.threshold = thr;
            found = true;
        }
    }
    if (!found) best.gain = -1e300;
    return best;
}

std::optional<SplitResult> reduce_features(const std::vector<SplitResult>& per_feature) {
    std::optional<SplitResult> best;
    for (const auto& s : per_feature) {
        if (s.gain <= 0.0) continue;
        if (!best || s.gain > best->gain) best = s;
        // equal gains: the scan order already visits lower features first, and
        // within a feature the lower threshold was preferred
    }
    return best;
}

}  // namespace

namespace detail {

std::optional<SplitResult> best_split_serial(const Tensor& X, const std::vector<int>& rows,
                                             const std::vector<double>& g,
                                             const std::vector<double>& h, double reg_lambda,
                                             double gamma) {
    if (rows.size() < 2) return std::nullopt;
    std::vector<SplitResult> per_feature(X.cols);
    for (int f = 0; f < X.cols; ++f)
        per_feature[f] = scan_feature(X, rows, g, h, reg_lambda, gamma, f);
    return reduce_features(per_feature);
}

}  // namespace detail

std::optional<SplitResult> best_split(const Tensor& X, const std::vector<int>& rows,
                                      const std::vector<double>& g,
                                      const std::vector<double>& h, double reg_lambda,
                                      double gamma) {
    if (rows.size() < 2) return std::nullopt;
    std::vector<SplitResult> per_feature(X.cols);
    int nt = kernels::max_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && X.cols > 1)
    for (int f = 0; f < X.cols; ++f)
        per_feature[f] = scan_feature(X, rows, g, h, reg_lambda, gamma, f);
    return reduce_features(per_feature);
}

double Tree::predict(const std::vector<double>& x) const {
    int n = 0;
    while (!nodes[n].is_leaf) {
        if (nodes[n].feature >= int(x.size()))
            throw DimensionError("tree predict: feature length mismatch");
        n = x[nodes[n].feature] < nodes[n].threshold ? nodes[n].left : nodes[n].right;
    }
    return nodes[n].leaf_value;
}

int Tree::n_leaves() const {
    int c = 0;
    for (const auto& n : nodes) c += n.is_leaf;
    return c;
}

namespace {

double leaf_value_of(const std::vector<int>& rows, const std::vector<double>& g,
                     const std::vector<double>& h, double l) {
    double G = 0, H = 0;
    for (int r : rows) {
        G += g[r];
        H += h[r];
    }
    return -G / (H + l);
}

void partition_rows(const Tensor& X, const std::vector<int>& rows, int feature,
                    double threshold, std::vector<int>& left, std::vector<int>& right) {
    for (int r : rows)
        (X.at(r, feature) < threshold ? left : right).push_back(r);
}

}  // namespace

Tree grow_tree(const Tensor& X, const std::vector<int>& rows, const std::vector<double>& g,
               const std::vector<double>& h, const GbtParams& params) {
    Tree tree;
    tree.nodes.push_back({});
    tree.nodes[0].leaf_value = leaf_value_of(rows, g, h, params.reg_lambda);

    struct Open {
        int node;
        std::vector<int> rows;
        int depth;
        SplitResult split;
        bool has_split;
    };

    auto try_split = [&](int node, const std::vector<int>& r, int depth) -> Open {
        Open o{node, r, depth, {}, false};
        if (depth >= params.max_depth) return o;
        auto s = best_split(X, r, g, h, params.reg_lambda, params.gamma);
        if (s) {
            o.split = *s;
            o.has_split = true;
        }
        return o;
    };

    if (params.growth == GbtParams::Growth::depth_wise) {
        std::vector<Open> frontier = {try_split(0, rows, 0)};
        while (!frontier.empty()) {
            std::vector<Open> next;
            for (auto& o : frontier) {
                if (!o.has_split) continue;
                std::vector<int> lrows, rrows;
                partition_rows(X, o.rows, o.split.feature, o.split.threshold, lrows, rrows);
                TreeNode& nd = tree.nodes[o.node];
                nd.is_leaf = false;
                nd.feature = o.split.feature;
                nd.threshold = o.split.threshold;
                nd.left = int(tree.nodes.size());
                nd.right = nd.left + 1;
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                tree.nodes[nd.left].leaf_value = leaf_value_of(lrows, g, h, params.reg_lambda);
                tree.nodes[nd.right].leaf_value = leaf_value_of(rrows, g, h, params.reg_lambda);
                next.push_back(try_split(tree.nodes[o.node].left, lrows, o.depth + 1));
                next.push_back(try_split(tree.nodes[o.node].right, rrows, o.depth + 1));
            }
            frontier = std::move(next);
        }
    } else {
        // leaf-wise: repeatedly split the open leaf with the largest gain
        std::vector<Open> open = {try_split(0, rows, 0)};
        int leaves = 1;
        while (leaves < params.max_leaves) {
            int best = -1;
            for (size_t i = 0; i < open.size(); ++i)
                if (open[i].has_split &&
                    (best < 0 || open[i].split.gain > open[best].split.gain))
                    best = int(i);
            if (best < 0) break;
            Open o = std::move(open[best]);
            open.erase(open.begin() + best);
            std::vector<int> lrows, rrows;
            partition_rows(X, o.rows, o.split.feature, o.split.threshold, lrows, rrows);
            TreeNode& nd = tree.nodes[o.node];
            nd.is_leaf = false;
            nd.feature = o.split.feature;
            nd.threshold = o.split.threshold;
            nd.left = int(tree.nodes.size());
            nd.right = nd.left + 1;
            tree.nodes.push_back({});
            tree.nodes.push_back({});
            tree.nodes[nd.left].leaf_value = leaf_value_of(lrows, g, h, params.reg_lambda);
            tree.nodes[nd.right].leaf_value = leaf_value_of(rrows, g, h, params.reg_lambda);
            open.push_back(try_split(tree.nodes[o.node].left, lrows, o.depth + 1));
            open.push_back(try_split(tree.nodes[o.node].right, rrows, o.depth + 1));
            ++leaves;
        }
    }
    return tree;
}

double BoostedEnsemble::predict(const std::vector<double>& x) const {
    double acc = base_score;
    for (const auto& t : trees) acc += learning_rate * t.predict(x);
    return acc;
}

nlohmann::json BoostedEnsemble::to_json() const {
    nlohmann::json jt = nlohmann::json::array();
    for (const auto& t : trees) {
        nlohmann::json jn = nlohmann::json::array();
        for (const auto& n : t.nodes)
            jn.push_back({{"leaf", n.is_leaf},
                          {"f", n.feature},
                          {"thr", n.threshold},
                          {"l", n.left},
                          {"r", n.right},
                          {"v", n.leaf_value}});
        jt.push_back(std::move(jn));
    }
    return {{"trees", jt},
            {"learning_rate", learning_rate},
            {"base_score", base_score},
            {"reg_lambda", reg_lambda},
            {"gamma", gamma}};
}

BoostedEnsemble BoostedEnsemble::from_json(const nlohmann::json& j) {
    BoostedEnsemble e;
    e.learning_rate = j.at("learning_rate");
    e.base_score = j.at("base_score");
    e.reg_lambda = j.at("reg_lambda");
    e.gamma = j.at("gamma");
    for (const auto& jt : j.at("trees")) {
        Tree t;
        for (const auto& jn : jt) {
            TreeNode n;
            n.is_leaf = jn.at("leaf");
            n.feature = jn.at("f");
            n.threshold = jn.at("thr");
            n.left = jn.at("l");
            n.right = jn.at("r");
            n.leaf_value = jn.at("v");
            t.nodes.push_back(n);
        }
        e.trees.push_back(std::move(t));
    }
    return e;
}

BoostedEnsemble boost(const Tensor& X, const std::vector<double>& y, const GbtParams& params) {
    const int H = X.rows;
    if (params.rounds < 1) throw ConfigError("boost: need at least 1 round");
    if (int(y.size()) != H) throw DimensionError("boost: X/y length mismatch");
    for (double v : X.data)
        if (!std::isfinite(v)) throw DataError("boost: NaN in features");
    for (double v : y)
        if (!std::isfinite(v)) throw DataError("boost: NaN in targets");
    if (!(params.learning_rate >= 0.0 && params.learning_rate <= 1.0))
        throw ConfigError("boost: learning_rate must be in [0, 1]");

    BoostedEnsemble e;
    e.learning_rate = params.learning_rate;
    e.reg_lambda = params.reg_lambda;
    e.gamma = params.gamma;
    for (double v : y) e.base_score += v;
    e.base_score /= double(H);

    // chronological validation tail for early stopping
    int n_val = params.early_stop_rounds > 0 ? int(std::floor(params.validation_fraction * H))
                                             : 0;
    int n_train = H - n_val;
    if (n_train < 1) {
        n_train = H;
        n_val = 0;
    }
    std::vector<int> train_rows(n_train);
    for (int i = 0; i < n_train; ++i) train_rows[i] = i;

    std::vector<double> yhat(H, e.base_score);
    std::vector<double> g, h;
    double best_val = 1e300;
    int best_size = 0, since_best = 0;

    for (int round = 0; round < params.rounds; ++round) {
        grad_hess(y, yhat, g, h);
        Tree t = grow_tree(X, train_rows, g, h, params);
        e.trees.push_back(t);
        for (int i = 0; i < H; ++i) {
            std::vector<double> x(X.cols);
            for (int j = 0; j < X.cols; ++j) x[j] = X.at(i, j);
            yhat[i] += params.learning_rate * t.predict(x);
        }
        if (n_val > 0) {
            double val = 0;
            for (int i = n_train; i < H; ++i) val += (y[i] - yhat[i]) * (y[i] - yhat[i]);
            val /= double(n_val);
            if (val < best_val - 1e-15) {
                best_val = val;
                best_size = int(e.trees.size());
                since_best = 0;
            } else if (++since_best >= params.early_stop_rounds) {
                break;
            }
        }
    }
    if (n_val > 0 && best_size > 0) e.trees.resize(size_t(best_size));
    return e;
}

}  // namespace tsfb
