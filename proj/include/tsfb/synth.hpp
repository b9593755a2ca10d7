#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsfb/panel.hpp"
#include "tsfb/rng.hpp"

namespace tsfb {

enum class KernelKind { periodic, linear, rbf, rational_quadratic, white_noise, constant };

const char* kernel_kind_name(KernelKind k);

// A covariance spec: either a base kernel leaf or a sum/product node over two
// children. Random composition folds leaves pairwise, so depth <= leaves - 1.
struct KernelSpec {
    enum class Op { leaf, sum, product };
    Op op = Op::leaf;
    KernelKind kind = KernelKind::constant;
    double variance = 1.0;
    double length_scale = 1.0;
    double period = 8.0;  // periodic only
    double alpha = 1.0;   // rational quadratic only
    std::vector<KernelSpec> children;

    double eval(double x1, double x2) const;
    int leaf_count() const;
    int depth() const;
    nlohmann::json to_json() const;
};

struct BankConfig {
    std::vector<KernelKind> kinds = {KernelKind::periodic,      KernelKind::linear,
                                     KernelKind::rbf,           KernelKind::rational_quadratic,
                                     KernelKind::white_noise,   KernelKind::constant};
    int max_leaves = 5;
    int grid_n = 1024;  // sets the upper end of the period prior, n/4
};

KernelSpec sample_kernel_spec(Rng& rng, const BankConfig& bank);

struct SyntheticSeries {
    std::vector<double> values;
    uint64_t seed = 0;
    KernelSpec spec;
};

// trajectory of a zero-mean GP prior on grid {0..n-1}: Cholesky of the
// covariance (with escalating diagonal jitter) applied to seeded normals
SyntheticSeries gp_sample(const KernelSpec& spec, int n, uint64_t seed);

enum class SignalPattern { sine, ar1, step };

// deterministic-pattern panel for acceptance fixtures: 252*years days per
// asset, fully unmasked, log-uniform market caps
ReturnPanel make_signal_panel(int assets, int years, SignalPattern pattern, double noise_sd,
                              uint64_t seed);

// Training-window source pool: panel series + auxiliary vectors + GP draws.
struct TrainingStream {
    struct Source {
        std::string name;
        std::vector<double> values;
    };
    std::vector<Source> sources;
    Rng rng{1};

    // uniform over sources, uniform start; shorter sources are used whole
    std::vector<double> sample_window(int len);
};

TrainingStream augment_training_stream(const ReturnPanel& panel, int synthetic_count,
                                       const std::vector<std::vector<double>>& auxiliary,
                                       uint64_t seed, int synth_len = 512,
                                       const BankConfig& bank = {});

}  // namespace tsfb
