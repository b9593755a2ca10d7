#include "tsfb/synth.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

namespace tsfb {

const char* kernel_kind_name(KernelKind k) {
    switch (k) {
        case KernelKind::periodic: return "periodic";
        case KernelKind::linear: return "linear";
        case KernelKind::rbf: return "rbf";
        case KernelKind::rational_quadratic: return "rational_quadratic";
        case KernelKind::white_noise: return "white_noise";
        case KernelKind::constant: return "constant";
    }
    return "?";
}

double KernelSpec::eval(double x1, double x2) const {
    if (op == Op::sum) return children[0].eval(x1, x2) + children[1].eval(x1, x2);
    if (op == Op::product) return children[0].eval(x1, x2) * children[1].eval(x1, x2);
    double d = x1 - x2;
    switch (kind) {
        case KernelKind::periodic: {
            double s = std::sin(M_PI * std::fabs(d) / period) / length_scale;
            return variance * std::exp(-2.0 * s * s);
        }
        case KernelKind::linear:
            return variance * x1 * x2;
        case KernelKind::rbf:
            return variance * std::exp(-d * d / (2.0 * length_scale * length_scale));
        case KernelKind::rational_quadratic:
            return variance *
                   std::pow(1.0 + d * d / (2.0 * alpha * length_scale * length_scale), -alpha);
        case KernelKind::white_noise:
            return x1 == x2 ? variance : 0.0;
        case KernelKind::constant:
            return variance;
    }
    return 0.0;
}

int KernelSpec::leaf_count() const {
    if (op == Op::leaf) return 1;
    return children[0].leaf_count() + children[1].leaf_count();
}

int KernelSpec::depth() const {
    if (op == Op::leaf) return 0;
    return 1 + std::max(children[0].depth(), children[1].depth());
}

nlohmann::json KernelSpec::to_json() const {
    nlohmann::json j;
    if (op == Op::leaf) {
        j["kind"] = kernel_kind_name(kind);
        j["variance"] = variance;
        if (kind == KernelKind::rbf || kind == KernelKind::rational_quadratic ||
            kind == KernelKind::periodic)
            j["length_scale"] = length_scale;
        if (kind == KernelKind::periodic) j["period"] = period;
        if (kind == KernelKind::rational_quadratic) j["alpha"] = alpha;
    } else {
        j["op"] = op == Op::sum ? "sum" : "product";
        j["children"] = {children[0].to_json(), children[1].to_json()};
    }
    return j;
}

KernelSpec sample_kernel_spec(Rng& rng, const BankConfig& bank) {
    if (bank.kinds.empty()) throw ConfigError("kernel bank is empty");
    if (bank.max_leaves < 1) throw ConfigError("max_leaves must be >= 1");
    int n_leaves = 1 + int(rng.below(uint64_t(bank.max_leaves)));
    auto sample_leaf = [&] {
        KernelSpec k;
        k.op = KernelSpec::Op::leaf;
        k.kind = bank.kinds[rng.below(bank.kinds.size())];
        k.variance = rng.log_uniform(0.1, 10.0);
        k.length_scale = rng.log_uniform(0.1, 10.0);
        k.period = rng.uniform(4.0, std::max(4.0, double(bank.grid_n) / 4.0));
        k.alpha = rng.log_uniform(0.1, 10.0);
        return k;
    };
    KernelSpec spec = sample_leaf();
    for (int i = 1; i < n_leaves; ++i) {
        KernelSpec node;
        node.op = rng.below(2) ? KernelSpec::Op::product : KernelSpec::Op::sum;
        node.children = {std::move(spec), sample_leaf()};
        spec = std::move(node);
    }
    return spec;
}

SyntheticSeries gp_sample(const KernelSpec& spec, int n, uint64_t seed) {
    if (n < 1) throw GenerationError("gp_sample: n must be >= 1");
    SyntheticSeries out;
    out.seed = seed;
    out.spec = spec;
    Rng rng(seed);

    // pure white noise is diagonal; skip the O(n^3) factorization
    if (spec.op == KernelSpec::Op::leaf && spec.kind == KernelKind::white_noise) {
        double sd = std::sqrt(spec.variance);
        out.values.resize(n);
        for (auto& v : out.values) v = sd * rng.normal();
        return out;
    }

    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
            double v = spec.eval(double(i), double(j));
            K(i, j) = v;
            K(j, i) = v;
        }
    double trace_scale = K.trace() / double(n);
    if (!(trace_scale > 0)) trace_scale = 1.0;

    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 1e-10 * trace_scale;
    const double max_jitter = 1e-4 * trace_scale;
    bool ok = false;
    while (true) {
        Eigen::MatrixXd Kj = K;
        Kj.diagonal().array() += jitter;
        llt.compute(Kj);
        if (llt.info() == Eigen::Success) {
            ok = true;
            break;
        }
        if (jitter >= max_jitter) break;
        jitter *= 10.0;
    }
    if (!ok)
        throw GenerationError("covariance not positive-definite after jitter escalation: " +
                              spec.to_json().dump());

    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = rng.normal();
    Eigen::VectorXd y = llt.matrixL() * z;
    out.values.assign(y.data(), y.data() + n);
    for (double v : out.values)
        if (!std::isfinite(v))
            throw GenerationError("non-finite GP sample from spec " + spec.to_json().dump());
    return out;
}

namespace {

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static const int d[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && leap(y) ? 29 : d[m - 1];
}

std::string format_date(int y, int m, int d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
}

}  // namespace

ReturnPanel make_signal_panel(int assets, int years, SignalPattern pattern, double noise_sd,
                              uint64_t seed) {
    if (assets < 10) throw ConfigError("make_signal_panel: need at least 10 assets");
    if (years < 2) throw ConfigError("make_signal_panel: need at least 2 years");
    const int days_per_year = 252;
    const int n_days = days_per_year * years;
    const int start_year = 2010;

    ReturnPanel p;
    // 252 consecutive calendar days per year, restarting each Jan 1
    for (int y = 0; y < years; ++y) {
        int yy = start_year + y, mm = 1, dd = 1;
        for (int t = 0; t < days_per_year; ++t) {
            p.dates.push_back(format_date(yy, mm, dd));
            if (++dd > days_in_month(yy, mm)) {
                dd = 1;
                ++mm;
            }
        }
    }

    Rng rng(seed);
    p.returns = Tensor(n_days, assets);
    p.market_cap = Tensor(n_days, assets);
    p.mask.assign(size_t(n_days) * assets, 1);
    for (int a = 0; a < assets; ++a) {
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "SYN%04d", a);
        p.assets.push_back({idbuf, "XX"});
        Rng arng = rng.fork(uint64_t(a) + 1);
        double phase = 2.0 * M_PI * double(a) / double(assets);
        double cap = arng.log_uniform(1e8, 1e11);
        double prev = 0.0;
        for (int t = 0; t < n_days; ++t) {
            double sig = 0.0;
            switch (pattern) {
                case SignalPattern::sine:
                    sig = 0.01 * std::sin(2.0 * M_PI * double(t) / 21.0 + phase);
                    break;
                case SignalPattern::ar1:
                    sig = 0.9 * prev;
                    break;
                case SignalPattern::step:
                    // yearly sign flips, asset parity sets the starting side
                    sig = ((t / days_per_year + a) % 2 ? -1.0 : 1.0) * 0.005;
                    break;
            }
            double r = sig + (noise_sd > 0 ? noise_sd * arng.normal() : 0.0);
            prev = r;
            p.returns.at(t, a) = r;
            p.market_cap.at(t, a) = cap;
        }
    }
    p.first_valid.assign(assets, 0);
    p.last_valid.assign(assets, n_days - 1);
    return p;
}

std::vector<double> TrainingStream::sample_window(int len) {
    if (sources.empty()) throw ConfigError("training stream has no sources");
    const Source& s = sources[rng.below(sources.size())];
    if (int(s.values.size()) <= len) return s.values;
    int start = int(rng.below(uint64_t(s.values.size() - len + 1)));
    return std::vector<double>(s.values.begin() + start, s.values.begin() + start + len);
}

TrainingStream augment_training_stream(const ReturnPanel& panel, int synthetic_count,
                                       const std::vector<std::vector<double>>& auxiliary,
                                       uint64_t seed, int synth_len, const BankConfig& bank) {
    if (synthetic_count < 0) throw ConfigError("synthetic_count must be >= 0");
    TrainingStream ts;
    ts.rng = Rng(seed);
    for (int a = 0; a < panel.n_assets(); ++a) {
        TrainingStream::Source s;
        s.name = "panel:" + panel.assets[a].id;
        for (int d = 0; d < panel.n_dates(); ++d)
            if (panel.valid(d, a)) s.values.push_back(panel.ret(d, a));
        if (!s.values.empty()) ts.sources.push_back(std::move(s));
    }
    for (size_t i = 0; i < auxiliary.size(); ++i)
        ts.sources.push_back({"aux:" + std::to_string(i), auxiliary[i]});
    Rng grng = Rng(seed).fork(0xA0C5);
    for (int i = 0; i < synthetic_count; ++i) {
        BankConfig b = bank;
        b.grid_n = synth_len;
        KernelSpec spec = sample_kernel_spec(grng, b);
        SyntheticSeries ss = gp_sample(spec, synth_len, grng.next_u64());
        ts.sources.push_back({"synth:" + std::to_string(i), std::move(ss.values)});
    }
    return ts;
}

}  // namespace tsfb
