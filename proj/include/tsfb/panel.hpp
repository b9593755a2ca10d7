#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsfb/errors.hpp"
#include "tsfb/tensor.hpp"

namespace tsfb {

struct RawRecord {
    std::string date;      // ISO-8601, lexicographic order == chronological order
    std::string asset_id;
    std::string country;
    std::optional<double> price;
    double dividend = 0.0;
    double risk_free_daily = 0.0;
    std::optional<double> market_cap;
    bool delist_flag = false;
    std::optional<double> delist_return;
    // set by apply_delisting; overrides the computed final-day return
    std::optional<double> override_return;
};

struct AssetMeta {
    std::string id;
    std::string country;
};

// Immutable cleaned panel: rows = dates, cols = assets. mask[cell] != 0 means
// the excess return is valid. Market caps carry NaN where missing.
struct ReturnPanel {
    std::vector<std::string> dates;
    std::vector<AssetMeta> assets;
    Tensor returns;                // n_dates x n_assets
    Tensor market_cap;             // n_dates x n_assets, NaN = missing
    std::vector<uint8_t> mask;     // n_dates * n_assets
    std::vector<int> first_valid;  // per asset, date index; -1 if never valid
    std::vector<int> last_valid;

    int n_dates() const { return int(dates.size()); }
    int n_assets() const { return int(assets.size()); }
    bool valid(int d, int a) const { return mask[size_t(d) * assets.size() + a] != 0; }
    double ret(int d, int a) const { return returns.at(d, a); }
    size_t unmasked_count() const;
};

struct CleanConfig {
    bool eval_universe = false;  // adds the $5 minimum-price screen
};

struct DropEntry {
    std::string date;
    std::string asset_id;
    std::string reason;  // bad_price | extreme_return | small_cap | min_price
};

struct CleanResult {
    ReturnPanel panel;
    std::vector<DropEntry> drops;
};

// r = (price + dividend - prev_price)/prev_price - rf_daily
double compute_excess_return(double prev_price, double price, double dividend, double rf_daily);

std::vector<RawRecord> parse_raw_csv(const std::string& path);

// drops bad prices, |provisional return| > 10, bottom-5% country-day caps,
// and (eval universe) price < $5; appends one DropEntry per removed record
std::vector<RawRecord> filter_raw(std::vector<RawRecord> records, const CleanConfig& cfg,
                                  std::vector<DropEntry>& drops);

// resolves delisting rows: reported delist return when present, else -30%
std::vector<RawRecord> apply_delisting(std::vector<RawRecord> records);

ReturnPanel build_panel(const std::vector<RawRecord>& records);

void winsorize(ReturnPanel& panel);
void impute_country_day(ReturnPanel& panel);
void drop_empty_dates(ReturnPanel& panel);

// full pipeline: filter -> delisting -> returns -> winsorize -> boundary mask
// -> impute -> drop empty dates
CleanResult clean_pipeline(std::vector<RawRecord> records, const CleanConfig& cfg);

// within-date market-cap quartile labels, aligned with panel.assets
enum class CapStratum { excluded = -1, small = 0, mid = 1, large = 2 };
std::vector<CapStratum> cap_strata(const ReturnPanel& panel, int date_index);

// binary cache (magic TSFB) and the drop log
void save_panel_cache(const ReturnPanel& panel, const std::string& path);
ReturnPanel load_panel_cache(const std::string& path);
void write_drop_log(const std::vector<DropEntry>& drops, const std::string& path);

// linear-interpolation percentile of a sorted copy of v, p in [0,100]
double percentile(std::vector<double> v, double p);

}  // namespace tsfb
