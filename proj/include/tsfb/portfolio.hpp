#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsfb/evalproto.hpp"

namespace tsfb {

struct DecileAssignment {
    std::string date;
    int date_index = -1;
    // buckets[0] = Low ... buckets[9] = High, each a list of asset ids
    std::array<std::vector<std::string>, 10> buckets;

    int universe_size() const;
};

// ascending sort by y_pred with asset_id tie-break; remainder assets go one
// per bucket starting from bucket 1 (Low); nullopt when < 10 assets
std::optional<DecileAssignment> sort_deciles(const std::string& date,
                                             const std::vector<ForecastRecord>& records);

// equal-weight mean of members with realized returns; nullopt when none left
std::optional<double> leg_return(const std::vector<std::string>& bucket,
                                 const std::map<std::string, double>& realized);

struct CostScenario {
    std::string name;
    bool mixed = false;
    double fixed_bps = 0.0;

    static CostScenario fixed(double bps);
    static CostScenario mixed_structure();  // 21.3 small / 11.2 large / 16.25 mid bps
};

struct LedgerRow {
    std::string date;
    int date_index = -1;
    double ls_gross = 0.0, long_ret = 0.0, short_ret = 0.0;
    double turnover_long = 0.0, turnover_short = 0.0;
    std::map<std::string, double> net;  // scenario name -> long-short net return
    // per-leg nets: long - long drag, short + short drag (costs always hurt)
    std::map<std::string, double> net_long, net_short;
};

struct PortfolioLedger {
    std::vector<LedgerRow> rows;
    std::vector<std::pair<std::string, std::string>> skipped;  // (date, reason)
    std::vector<std::string> scenario_order;

    void save_csv(const std::string& path) const;
};

// daily-rebalanced equal-weight deciles: long = High bucket, short = Low.
// Turnover tau = 1/2 sum |w_new - w_old| per leg; day cost drag = 2 tau cbar
// with cbar the traded-notional-weighted rate; the first day charges full
// establishment turnover tau = 1. Mixed rates follow the forecast-date cap
// stratum (mid rate for assets without a cap quartile).
PortfolioLedger build_ledger(const ForecastSet& forecasts, const ReturnPanel& panel,
                             const std::vector<CostScenario>& scenarios);

struct SeriesStats {
    int n = 0;
    double daily_bps = 0.0;
    double ann_ret_pct = 0.0;
    double ann_sd_pct = 0.0;
    std::optional<double> sharpe;  // missing when sd == 0
    double max_dd_pct = 0.0;
    double max_dd_1day_pct = 0.0;
    double skew = 0.0;
    double kurtosis = 0.0;  // excess by default

    nlohmann::json to_json() const;
};

// arithmetic x252 annualization, sqrt(252) sharpe, drawdowns on the
// compounded wealth path, population-moment skew and (excess) kurtosis
SeriesStats perf_stats(const std::vector<double>& daily, bool raw_kurtosis = false);

// extracts a daily series: "ls_gross" | "long" | "short" | "net_<scenario>" |
// "net_long_<scenario>" | "net_short_<scenario>"
std::vector<double> ledger_series(const PortfolioLedger& ledger, const std::string& what);

// (long_short, long, short) triplets for gross and each scenario
nlohmann::json perf_report(const PortfolioLedger& ledger, bool raw_kurtosis = false);

struct SpreadTable {
    std::array<double, 10> decile_ann_ret_pct{};
    double hl_ann_ret_pct = 0.0;
    int n_days = 0;

    void save_csv(const std::string& path) const;
};

SpreadTable spread_table(const ForecastSet& forecasts, const ReturnPanel& panel);

struct YearlySharpe {
    int year = 0;
    std::optional<double> sharpe;
    bool low_sample = false;  // fewer than 20 trading days
    int n_days = 0;
};

std::vector<YearlySharpe> yearly_sharpe_series(const PortfolioLedger& ledger);

}  // namespace tsfb
