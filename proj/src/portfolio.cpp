#include "tsfb/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace tsfb {

int DecileAssignment::universe_size() const {
    int n = 0;
    for (const auto& b : buckets) n += int(b.size());
    return n;
}

std::optional<DecileAssignment> sort_deciles(const std::string& date,
                                             const std::vector<ForecastRecord>& records) {
    if (records.size() < 10) return std::nullopt;
    std::vector<const ForecastRecord*> order;
    order.reserve(records.size());
    for (const auto& r : records) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](const ForecastRecord* a, const ForecastRecord* b) {
        if (a->y_pred != b->y_pred) return a->y_pred < b->y_pred;
        return a->asset_id < b->asset_id;
    });

    DecileAssignment da;
    da.date = date;
    da.date_index = order.front()->date_index;
    const int n = int(order.size());
    const int base = n / 10, rem = n % 10;
    int pos = 0;
    for (int b = 0; b < 10; ++b) {
        int sz = base + (b < rem ? 1 : 0);  // remainder one-per-bucket from Low
        for (int i = 0; i < sz; ++i) da.buckets[size_t(b)].push_back(order[size_t(pos++)]->asset_id);
    }
    return da;
}

std::optional<double> leg_return(const std::vector<std::string>& bucket,
                                 const std::map<std::string, double>& realized) {
    double acc = 0.0;
    int n = 0;
    for (const auto& id : bucket) {
        auto it = realized.find(id);
        if (it == realized.end()) continue;
        acc += it->second;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return acc / double(n);
}

CostScenario CostScenario::fixed(double bps) {
    CostScenario s;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", bps);
    s.name = std::string("fixed") + buf;
    s.fixed_bps = bps;
    return s;
}

CostScenario CostScenario::mixed_structure() {
    CostScenario s;
    s.name = "mixed";
    s.mixed = true;
    return s;
}

namespace {

constexpr double kSmallBps = 21.3, kLargeBps = 11.2, kMidBps = 16.25;

// equal weights over the leg's invested members
std::map<std::string, double> leg_weights(const std::vector<std::string>& bucket,
                                          const std::map<std::string, double>& realized) {
    std::map<std::string, double> w;
    for (const auto& id : bucket)
        if (realized.count(id)) w[id] = 0.0;
    if (!w.empty())
        for (auto& [id, v] : w) v = 1.0 / double(w.size());
    return w;
}

struct LegCost {
    double turnover = 0.0;
    // per scenario name: drag = sum of traded notional x rate
    std::map<std::string, double> drag;
};

LegCost leg_turnover_cost(const std::map<std::string, double>& prev,
                          const std::map<std::string, double>& cur, bool first_day,
                          const std::vector<CostScenario>& scenarios,
                          const std::map<std::string, double>& rate_bps) {
    std::map<std::string, double> traded;  // |w_new - w_old| per asset
    for (const auto& [id, w] : cur) {
        auto it = prev.find(id);
        traded[id] = std::fabs(w - (it == prev.end() ? 0.0 : it->second));
    }
    for (const auto& [id, w] : prev)
        if (!cur.count(id)) traded[id] = w;

    double total = 0.0;
    for (const auto& [id, t] : traded) total += t;
    LegCost out;
    out.turnover = first_day ? 1.0 : 0.5 * total;
    for (const auto& sc : scenarios) {
        double cbar;
        if (total > 0.0) {
            double acc = 0.0;
            for (const auto& [id, t] : traded) {
                double r = sc.mixed ? rate_bps.at(id) : sc.fixed_bps;
                acc += t * r;
            }
            cbar = acc / total;
        } else {
            cbar = sc.mixed ? kMidBps : sc.fixed_bps;
        }
        out.drag[sc.name] = 2.0 * out.turnover * (cbar * 1e-4);
    }
    return out;
}

double stratum_rate(CapStratum s) {
    switch (s) {
        case CapStratum::small: return kSmallBps;
        case CapStratum::large: return kLargeBps;
        default: return kMidBps;  // mid and unclassified
    }
}

}  // namespace

PortfolioLedger build_ledger(const ForecastSet& forecasts, const ReturnPanel& panel,
                             const std::vector<CostScenario>& scenarios) {
    std::map<std::string, int> asset_index;
    for (int a = 0; a < panel.n_assets(); ++a) asset_index[panel.assets[size_t(a)].id] = a;

    // records grouped by date, chronological (ISO dates sort lexicographically)
    std::map<std::string, std::vector<ForecastRecord>> by_date;
    for (const auto& r : forecasts.records) by_date[r.date].push_back(r);

    PortfolioLedger ledger;
    for (const auto& sc : scenarios) ledger.scenario_order.push_back(sc.name);

    std::map<std::string, double> prev_long_w, prev_short_w;
    bool have_position = false;

    for (const auto& [date, recs] : by_date) {
        auto da = sort_deciles(date, recs);
        if (!da) {
            ledger.skipped.push_back({date, "fewer than 10 assets"});
            continue;
        }
        std::map<std::string, double> realized;
        for (const auto& r : recs)
            if (r.y_true) realized[r.asset_id] = *r.y_true;

        const auto& low = da->buckets[0];
        const auto& high = da->buckets[9];
        auto lr = leg_return(high, realized);
        auto sr = leg_return(low, realized);
        if (!lr || !sr) {
            ledger.skipped.push_back({date, "empty leg after missing-return exclusion"});
            continue;
        }

        std::map<std::string, double> lw = leg_weights(high, realized);
        std::map<std::string, double> sw = leg_weights(low, realized);

        // mixed rates by forecast-date cap stratum
        std::map<std::string, double> rate_bps;
        bool need_mixed = false;
        for (const auto& sc : scenarios) need_mixed |= sc.mixed;
        if (need_mixed) {
            std::vector<CapStratum> strata;
            if (da->date_index >= 0) strata = cap_strata(panel, da->date_index);
            auto rate_of = [&](const std::string& id) {
                auto it = asset_index.find(id);
                if (it == asset_index.end() || strata.empty()) return kMidBps;
                return stratum_rate(strata[size_t(it->second)]);
            };
            for (const auto& [id, w] : lw) rate_bps[id] = rate_of(id);
            for (const auto& [id, w] : sw) rate_bps[id] = rate_of(id);
            for (const auto& [id, w] : prev_long_w)
                if (!rate_bps.count(id)) rate_bps[id] = rate_of(id);
            for (const auto& [id, w] : prev_short_w)
                if (!rate_bps.count(id)) rate_bps[id] = rate_of(id);
        }

        LegCost lc = leg_turnover_cost(prev_long_w, lw, !have_position, scenarios, rate_bps);
        LegCost scost = leg_turnover_cost(prev_short_w, sw, !have_position, scenarios, rate_bps);

        LedgerRow row;
        row.date = date;
        row.date_index = da->date_index;
        row.long_ret = *lr;
        row.short_ret = *sr;
        row.ls_gross = *lr - *sr;
        row.turnover_long = lc.turnover;
        row.turnover_short = scost.turnover;
        for (const auto& sc : scenarios) {
            row.net[sc.name] = row.ls_gross - lc.drag.at(sc.name) - scost.drag.at(sc.name);
            row.net_long[sc.name] = row.long_ret - lc.drag.at(sc.name);
            row.net_short[sc.name] = row.short_ret + scost.drag.at(sc.name);
        }
        ledger.rows.push_back(std::move(row));

        prev_long_w = std::move(lw);
        prev_short_w = std::move(sw);
        have_position = true;
    }
    return ledger;
}

SeriesStats perf_stats(const std::vector<double>& daily, bool raw_kurtosis) {
    SeriesStats st;
    st.n = int(daily.size());
    if (st.n < 1) return st;
    double mean = 0.0;
    for (double r : daily) mean += r;
    mean /= st.n;
    st.daily_bps = mean * 1e4;
    st.ann_ret_pct = mean * 252.0 * 100.0;

    if (st.n >= 2) {
        double ss = 0.0;
        for (double r : daily) ss += (r - mean) * (r - mean);
        double sd = std::sqrt(ss / double(st.n - 1));
        st.ann_sd_pct = sd * std::sqrt(252.0) * 100.0;
        if (sd > 0.0) st.sharpe = mean / sd * std::sqrt(252.0);

        double m2 = 0.0, m3 = 0.0, m4 = 0.0;
        for (double r : daily) {
            double d = r - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= st.n;
        m3 /= st.n;
        m4 /= st.n;
        if (m2 > 0.0) {
            st.skew = m3 / std::pow(m2, 1.5);
            st.kurtosis = m4 / (m2 * m2) - (raw_kurtosis ? 0.0 : 3.0);
        } else if (raw_kurtosis) {
            st.kurtosis = 0.0;
        }
    }

    double wealth = 1.0, peak = 1.0, dd = 0.0, dd1 = 0.0;
    for (double r : daily) {
        double next = wealth * (1.0 + r);
        if (wealth > 0.0) dd1 = std::max(dd1, (wealth - next) / wealth);
        wealth = next;
        peak = std::max(peak, wealth);
        if (peak > 0.0) dd = std::max(dd, (peak - wealth) / peak);
    }
    st.max_dd_pct = dd * 100.0;
    st.max_dd_1day_pct = dd1 * 100.0;
    return st;
}

nlohmann::json SeriesStats::to_json() const {
    nlohmann::json j = {{"n", n},
                        {"daily_bps", daily_bps},
                        {"ann_ret_pct", ann_ret_pct},
                        {"ann_sd_pct", ann_sd_pct},
                        {"max_dd_pct", max_dd_pct},
                        {"max_dd_1day_pct", max_dd_1day_pct},
                        {"skew", skew},
                        {"kurtosis", kurtosis}};
    j["sharpe"] = sharpe ? nlohmann::json(*sharpe) : nlohmann::json();
    return j;
}

std::vector<double> ledger_series(const PortfolioLedger& ledger, const std::string& what) {
    std::vector<double> out;
    out.reserve(ledger.rows.size());
    for (const auto& r : ledger.rows) {
        if (what == "ls_gross")
            out.push_back(r.ls_gross);
        else if (what == "long")
            out.push_back(r.long_ret);
        else if (what == "short")
            out.push_back(r.short_ret);
        else if (what.rfind("net_long_", 0) == 0) {
            auto it = r.net_long.find(what.substr(9));
            if (it == r.net_long.end()) throw ConfigError("ledger: unknown scenario " + what);
            out.push_back(it->second);
        } else if (what.rfind("net_short_", 0) == 0) {
            auto it = r.net_short.find(what.substr(10));
            if (it == r.net_short.end()) throw ConfigError("ledger: unknown scenario " + what);
            out.push_back(it->second);
        } else if (what.rfind("net_", 0) == 0) {
            auto it = r.net.find(what.substr(4));
            if (it == r.net.end()) throw ConfigError("ledger: unknown scenario " + what);
            out.push_back(it->second);
        } else {
            throw ConfigError("ledger: unknown series " + what);
        }
    }
    return out;
}

nlohmann::json perf_report(const PortfolioLedger& ledger, bool raw_kurtosis) {
    nlohmann::json j;
    j["kurtosis_convention"] = raw_kurtosis ? "raw" : "excess";
    j["annualization"] = "arithmetic x252, sqrt(252) sharpe";
    j["gross"] = {{"long_short", perf_stats(ledger_series(ledger, "ls_gross"), raw_kurtosis).to_json()},
                  {"long", perf_stats(ledger_series(ledger, "long"), raw_kurtosis).to_json()},
                  {"short", perf_stats(ledger_series(ledger, "short"), raw_kurtosis).to_json()}};
    for (const auto& name : ledger.scenario_order)
        j["net"][name] = {
            {"long_short", perf_stats(ledger_series(ledger, "net_" + name), raw_kurtosis).to_json()},
            {"long", perf_stats(ledger_series(ledger, "net_long_" + name), raw_kurtosis).to_json()},
            {"short",
             perf_stats(ledger_series(ledger, "net_short_" + name), raw_kurtosis).to_json()}};
    return j;
}

void PortfolioLedger::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("ledger: cannot open for write: " + path);
    os << "date,ls_gross,long,short,turnover_long,turnover_short";
    for (const auto& name : scenario_order) os << ",ls_net_" << name;
    os << '\n';
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (const auto& r : rows) {
        os << r.date << ',';
        put(r.ls_gross);
        os << ',';
        put(r.long_ret);
        os << ',';
        put(r.short_ret);
        os << ',';
        put(r.turnover_long);
        os << ',';
        put(r.turnover_short);
        for (const auto& name : scenario_order) {
            os << ',';
            put(r.net.at(name));
        }
        os << '\n';
    }
    if (!os) throw DataError("ledger: write failed: " + path);
}

SpreadTable spread_table(const ForecastSet& forecasts, const ReturnPanel& panel) {
    (void)panel;
    std::map<std::string, std::vector<ForecastRecord>> by_date;
    for (const auto& r : forecasts.records) by_date[r.date].push_back(r);

    std::array<double, 10> acc{};
    double hl = 0.0;
    int n_days = 0;
    for (const auto& [date, recs] : by_date) {
        auto da = sort_deciles(date, recs);
        if (!da) continue;
        std::map<std::string, double> realized;
        for (const auto& r : recs)
            if (r.y_true) realized[r.asset_id] = *r.y_true;
        std::array<std::optional<double>, 10> rets;
        bool all = true;
        for (int b = 0; b < 10; ++b) {
            rets[size_t(b)] = leg_return(da->buckets[size_t(b)], realized);
            all &= rets[size_t(b)].has_value();
        }
        if (!all) continue;
        for (int b = 0; b < 10; ++b) acc[size_t(b)] += *rets[size_t(b)];
        hl += *rets[9] - *rets[0];
        ++n_days;
    }
    SpreadTable t;
    t.n_days = n_days;
    if (n_days > 0) {
        for (int b = 0; b < 10; ++b)
            t.decile_ann_ret_pct[size_t(b)] = acc[size_t(b)] / n_days * 252.0 * 100.0;
        t.hl_ann_ret_pct = hl / n_days * 252.0 * 100.0;
    }
    return t;
}

void SpreadTable::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("spread table: cannot open for write: " + path);
    os << "bucket,ann_ret_pct\n";
    char buf[64];
    for (int b = 0; b < 10; ++b) {
        std::snprintf(buf, sizeof buf, "%.10g", decile_ann_ret_pct[size_t(b)]);
        std::string label = b == 0 ? "Low" : b == 9 ? "High" : std::to_string(b + 1);
        os << label << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.10g", hl_ann_ret_pct);
    os << "H-L," << buf << '\n';
    if (!os) throw DataError("spread table: write failed: " + path);
}

std::vector<YearlySharpe> yearly_sharpe_series(const PortfolioLedger& ledger) {
    std::map<int, std::vector<double>> by_year;
    for (const auto& r : ledger.rows) by_year[date_year(r.date)].push_back(r.ls_gross);
    std::vector<YearlySharpe> out;
    for (const auto& [year, series] : by_year) {
        YearlySharpe y;
        y.year = year;
        y.n_days = int(series.size());
        y.low_sample = y.n_days < 20;
        y.sharpe = perf_stats(series).sharpe;
        out.push_back(y);
    }
    return out;
}

}  // namespace tsfb
