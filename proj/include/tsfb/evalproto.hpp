#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsfb/chronos.hpp"
#include "tsfb/panel.hpp"
#include "tsfb/timesfm.hpp"

namespace tsfb {

enum class Regime { zero_shot, fine_tune, scratch };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& s);

struct ExperimentPlan {
    std::vector<int> window_sizes;  // subset of {5, 21, 252, 512}
    int train_start_year = 0;
    int first_oos_year = 0;
    int last_oos_year = 0;
    Regime regime = Regime::scratch;
    std::string scope = "local";  // local | global | augmented | synthetic_augmented

    void validate() const;
};

// Annual expanding-window vintage: the model estimated with data through
// cutoff_year forecasts calendar year cutoff_year + 1. Index ranges are
// half-open [begin, end) over panel date indices.
struct Vintage {
    int cutoff_year = 0;
    int train_begin = 0, train_end = 0;
    int eval_begin = 0, eval_end = 0;
};

int date_year(const std::string& iso_date);

std::vector<Vintage> build_vintages(const ExperimentPlan& plan, const ReturnPanel& panel);

// chronological split point: everything minus the final 10% (floor) trains
int tuning_train_rows(int n_rows);

// evaluates score(j) = validation MSE for each grid point on the first
// vintage's slice; lowest wins, ties to the earliest grid index
int tune_first_year(int grid_size, const std::function<double(int)>& score);

// the C most recent valid returns of asset a strictly before date index d,
// oldest first, restricted to date indices >= earliest; empty when fewer
std::vector<double> trailing_context(const ReturnPanel& panel, int d, int a, int C,
                                     int earliest = 0);

// pooled (C-lag window, next return) training pairs across assets for date
// indices in [d_begin, d_end); feature order oldest -> newest
struct PairSet {
    Tensor X;                // n x C
    std::vector<double> y;   // n
    std::vector<int> dates;  // target date index per row, ascending
};
PairSet build_training_pairs(const ReturnPanel& panel, int window, int d_begin, int d_end);

struct ForecastRecord {
    std::string date;
    std::string asset_id;
    int window = 0;
    std::string model_id;
    std::string regime;
    double y_pred = 0.0;
    std::optional<double> up_prob;
    int n_samples = 0;
    std::optional<double> y_true;
    // bookkeeping for the lookahead audit: panel date indices of the context
    int date_index = -1;
    int context_first = -1, context_last = -1;
};

struct ForecastSet {
    std::vector<ForecastRecord> records;

    void save_csv(const std::string& path) const;
};

// deterministic identifier used in artifact file names
std::string make_model_id(const std::string& family, const std::string& size, Regime regime,
                          const std::string& scope, int window, int cutoff_year);

struct RegimeRun {
    ForecastSet forecasts;
    std::optional<Checkpoint> checkpoint;  // absent for zero_shot (never written)
    int training_steps = 0;
};

// TSFM regimes over one vintage: zero_shot forecasts from the supplied
// checkpoint; fine_tune continues training from it; scratch starts fresh.
// family is "chronos" or "timesfm"; model config comes from the checkpoint
// (zero_shot / fine_tune) or the supplied config json (scratch).
RegimeRun run_regime(const ReturnPanel& panel, const Vintage& v, int window,
                     const std::string& family, Regime regime, const nlohmann::json& config,
                     const std::optional<Checkpoint>& base, const TrainSchedule& schedule,
                     const std::string& scope, uint64_t seed);

// metrics -------------------------------------------------------------------

// 100 * (1 - sum (y - yhat)^2 / sum y^2) over records with y_true;
// missing when no records qualify or sum y^2 == 0
std::optional<double> r2_oos(const std::vector<ForecastRecord>& records);

struct DirectionMetrics {
    double overall = 0.0;  // percent
    double up_acc = 0.0;
    double down_acc = 0.0;
    double macro_f1 = 0.0;  // in [0, 1]
    int n = 0;
};
// predicted up: up_prob > 0.5 when present, else y_pred > 0; realized up: y_true > 0
DirectionMetrics direction_metrics(const std::vector<ForecastRecord>& records);

struct MetricRow {
    int year = 0;  // -1 marks the across-year average row
    std::string stratum;  // full | large | small
    int window = 0;
    std::string model;
    std::optional<double> r2;
    std::optional<double> overall_acc, up_acc, down_acc, macro_f1;
    int n_years = 1;  // for average rows: yearly values present per metric (r2)
};

struct MetricReport {
    std::vector<MetricRow> rows;  // yearly rows then average rows

    void save_csv(const std::string& path) const;
    nlohmann::json to_json() const;
};

// yearly per-stratum metrics and their unweighted across-year means; strata
// come from the market cap on the forecast date
MetricReport yearly_average_report(const ForecastSet& forecasts, const ReturnPanel& panel);

// lookahead audit -----------------------------------------------------------

struct AuditResult {
    bool checkpoint_identical = false;
    bool forecasts_identical = false;  // over records with context before cutoff
    int compared_forecasts = 0;
    bool pass = false;
};

// re-runs `run` on the mutated panel and compares training-time artifacts and
// every forecast whose context lies entirely before cutoff_date_index
AuditResult lookahead_audit(const ReturnPanel& original, const ReturnPanel& mutated,
                            int cutoff_date_index,
                            const std::function<RegimeRun(const ReturnPanel&)>& run);

}  // namespace tsfb
