#include "tsfb/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <unordered_map>

#include "tsfb/csv.hpp"

namespace tsfb {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("panel cache: truncated file");
    return v;
}

void write_str(std::ostream& os, const std::string& s) {
    write_pod<uint32_t>(os, uint32_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

std::string read_str(std::istream& is) {
    uint32_t n = read_pod<uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DataError("panel cache: truncated string");
    return s;
}

// stable chronological order within asset, assets grouped
void sort_records(std::vector<RawRecord>& recs) {
    std::stable_sort(recs.begin(), recs.end(), [](const RawRecord& a, const RawRecord& b) {
        if (a.asset_id != b.asset_id) return a.asset_id < b.asset_id;
        return a.date < b.date;
    });
}

}  // namespace

size_t ReturnPanel::unmasked_count() const {
    size_t n = 0;
    for (uint8_t m : mask) n += m != 0;
    return n;
}

double compute_excess_return(double prev_price, double price, double dividend, double rf_daily) {
    if (!(prev_price > 0.0))
        throw DataError("compute_excess_return: nonpositive prev_price");
    return (price + dividend - prev_price) / prev_price - rf_daily;
}

std::vector<RawRecord> parse_raw_csv(const std::string& path) {
    csv::Table t = csv::read_file(path);
    int c_date = t.col("date"), c_id = t.col("asset_id"), c_ctry = t.col("country");
    int c_price = t.col("price"), c_div = t.col("dividend"), c_rf = t.col("risk_free_daily");
    int c_cap = t.col("market_cap"), c_df = t.col("delist_flag"), c_dr = t.col("delist_return");
    std::vector<RawRecord> out;
    out.reserve(t.rows.size());
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& row : t.rows) {
        if (int(row.size()) <= c_dr) throw DataError("raw csv: short row");
        RawRecord r;
        r.date = row[c_date];
        r.asset_id = row[c_id];
        r.country = row[c_ctry];
        if (!seen.insert({r.date, r.asset_id}).second)
            throw DataError("raw csv: duplicate (date, asset_id) = (" + r.date + ", " +
                            r.asset_id + ")");
        if (!row[c_price].empty()) r.price = std::stod(row[c_price]);
        if (!row[c_div].empty()) r.dividend = std::stod(row[c_div]);
        if (!row[c_rf].empty()) r.risk_free_daily = std::stod(row[c_rf]);
        if (!row[c_cap].empty()) r.market_cap = std::stod(row[c_cap]);
        r.delist_flag = row[c_df] == "1" || row[c_df] == "true";
        if (!row[c_dr].empty()) r.delist_return = std::stod(row[c_dr]);
        if (r.price && !std::isfinite(*r.price)) throw DataError("raw csv: non-finite price");
        if (r.market_cap && !std::isfinite(*r.market_cap))
            throw DataError("raw csv: non-finite market_cap");
        out.push_back(std::move(r));
    }
    return out;
}

double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw DataError("percentile of empty set");
    std::sort(v.begin(), v.end());
    double rank = p / 100.0 * double(v.size() - 1);
    size_t lo = size_t(rank);
    if (lo + 1 >= v.size()) return v.back();
    double frac = rank - double(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

std::vector<RawRecord> filter_raw(std::vector<RawRecord> records, const CleanConfig& cfg,
                                  std::vector<DropEntry>& drops) {
    sort_records(records);
    std::vector<RawRecord> kept;
    kept.reserve(records.size());

    // pass 1: price validity and the +/-1000% provisional-return screen,
    // computed against the previous surviving record of the same asset
    const RawRecord* prev = nullptr;
    for (auto& r : records) {
        if (prev && prev->asset_id != r.asset_id) prev = nullptr;
        if (!r.price || !(*r.price > 0.0)) {
            drops.push_back({r.date, r.asset_id, "bad_price"});
            continue;
        }
        if (prev) {
            double provisional =
                (*r.price + r.dividend - *prev->price) / *prev->price;
            if (std::fabs(provisional) > 10.0) {
                drops.push_back({r.date, r.asset_id, "extreme_return"});
                continue;
            }
        }
        kept.push_back(r);
        prev = &kept.back();
    }

    // pass 2: bottom-5% of the country-day market-cap distribution
    std::map<std::pair<std::string, std::string>, std::vector<double>> caps;
    for (const auto& r : kept)
        if (r.market_cap) caps[{r.country, r.date}].push_back(*r.market_cap);
    std::map<std::pair<std::string, std::string>, double> cutoff;
    for (auto& [key, v] : caps) cutoff[key] = percentile(v, 5.0);

    std::vector<RawRecord> out;
    out.reserve(kept.size());
    for (auto& r : kept) {
        if (r.market_cap) {
            auto it = cutoff.find({r.country, r.date});
            if (it != cutoff.end() && *r.market_cap < it->second) {
                drops.push_back({r.date, r.asset_id, "small_cap"});
                continue;
            }
        }
        if (cfg.eval_universe && *r.price < 5.0) {
            drops.push_back({r.date, r.asset_id, "min_price"});
            continue;
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RawRecord> apply_delisting(std::vector<RawRecord> records) {
    sort_records(records);
    for (size_t i = 0; i < records.size(); ++i) {
        RawRecord& r = records[i];
        if (!r.delist_flag) continue;
        bool is_final =
            i + 1 == records.size() || records[i + 1].asset_id != r.asset_id;
        if (!is_final)
            throw DataError("delist_flag on non-final row for asset " + r.asset_id);
        r.override_return = r.delist_return ? *r.delist_return : -0.30;
    }
    return records;
}

ReturnPanel build_panel(const std::vector<RawRecord>& records) {
    ReturnPanel p;
    std::set<std::string> date_set;
    std::map<std::string, std::string> asset_country;
    for (const auto& r : records) {
        date_set.insert(r.date);
        asset_country.emplace(r.asset_id, r.country);
    }
    p.dates.assign(date_set.begin(), date_set.end());
    for (const auto& [id, ctry] : asset_country) p.assets.push_back({id, ctry});

    std::unordered_map<std::string, int> date_ix, asset_ix;
    for (int i = 0; i < p.n_dates(); ++i) date_ix[p.dates[i]] = i;
    for (int i = 0; i < p.n_assets(); ++i) asset_ix[p.assets[i].id] = i;

    p.returns = Tensor::full(p.n_dates(), p.n_assets(), 0.0);
    p.market_cap = Tensor::full(p.n_dates(), p.n_assets(), kNaN);
    p.mask.assign(size_t(p.n_dates()) * p.n_assets(), 0);

    std::vector<RawRecord> recs = records;
    sort_records(recs);
    const RawRecord* prev = nullptr;
    for (const auto& r : recs) {
        if (prev && prev->asset_id != r.asset_id) prev = nullptr;
        int d = date_ix[r.date], a = asset_ix[r.asset_id];
        if (r.market_cap) p.market_cap.at(d, a) = *r.market_cap;
        if (prev) {
            double ret = r.override_return
                             ? *r.override_return
                             : compute_excess_return(*prev->price, *r.price, r.dividend,
                                                     r.risk_free_daily);
            p.returns.at(d, a) = ret;
            p.mask[size_t(d) * p.n_assets() + a] = 1;
        }
        prev = &r;
    }

    p.first_valid.assign(p.n_assets(), -1);
    p.last_valid.assign(p.n_assets(), -1);
    for (int a = 0; a < p.n_assets(); ++a)
        for (int d = 0; d < p.n_dates(); ++d)
            if (p.valid(d, a)) {
                if (p.first_valid[a] < 0) p.first_valid[a] = d;
                p.last_valid[a] = d;
            }
    return p;
}

void winsorize(ReturnPanel& panel) {
    for (int d = 0; d < panel.n_dates(); ++d)
        for (int a = 0; a < panel.n_assets(); ++a)
            if (panel.valid(d, a))
                panel.returns.at(d, a) = std::clamp(panel.returns.at(d, a), -1.0, 1.0);
}

void impute_country_day(ReturnPanel& panel) {
    // group asset columns by country once
    std::map<std::string, std::vector<int>> by_country;
    for (int a = 0; a < panel.n_assets(); ++a)
        by_country[panel.assets[a].country].push_back(a);

    for (int d = 0; d < panel.n_dates(); ++d) {
        for (const auto& [ctry, cols] : by_country) {
            std::vector<double> present;
            for (int a : cols)
                if (panel.valid(d, a)) present.push_back(panel.ret(d, a));
            if (present.empty()) continue;  // market-wide closure: stays missing
            std::sort(present.begin(), present.end());
            size_t n = present.size();
            double med = n % 2 ? present[n / 2]
                               : 0.5 * (present[n / 2 - 1] + present[n / 2]);
            for (int a : cols) {
                if (panel.valid(d, a)) continue;
                // only interior cells of the asset's active window
                if (panel.first_valid[a] < 0 || d < panel.first_valid[a] ||
                    d > panel.last_valid[a])
                    continue;
                panel.returns.at(d, a) = med;
                panel.mask[size_t(d) * panel.n_assets() + a] = 1;
            }
        }
    }
}

void drop_empty_dates(ReturnPanel& panel) {
    const int na = panel.n_assets();
    std::vector<int> keep;
    for (int d = 0; d < panel.n_dates(); ++d) {
        bool any = false;
        for (int a = 0; a < na && !any; ++a) any = panel.valid(d, a);
        if (any) keep.push_back(d);
    }
    if (int(keep.size()) == panel.n_dates()) return;

    ReturnPanel out;
    out.assets = panel.assets;
    out.returns = Tensor(int(keep.size()), na);
    out.market_cap = Tensor(int(keep.size()), na);
    out.mask.assign(keep.size() * size_t(na), 0);
    for (int nd = 0; nd < int(keep.size()); ++nd) {
        int d = keep[nd];
        out.dates.push_back(panel.dates[d]);
        for (int a = 0; a < na; ++a) {
            out.returns.at(nd, a) = panel.returns.at(d, a);
            out.market_cap.at(nd, a) = panel.market_cap.at(d, a);
            out.mask[size_t(nd) * na + a] = panel.mask[size_t(d) * na + a];
        }
    }
    out.first_valid.assign(na, -1);
    out.last_valid.assign(na, -1);
    for (int a = 0; a < na; ++a)
        for (int d = 0; d < out.n_dates(); ++d)
            if (out.valid(d, a)) {
                if (out.first_valid[a] < 0) out.first_valid[a] = d;
                out.last_valid[a] = d;
            }
    panel = std::move(out);
}

CleanResult clean_pipeline(std::vector<RawRecord> records, const CleanConfig& cfg) {
    CleanResult res;
    auto filtered = filter_raw(std::move(records), cfg, res.drops);
    auto delisted = apply_delisting(std::move(filtered));
    res.panel = build_panel(delisted);
    winsorize(res.panel);
    impute_country_day(res.panel);
    drop_empty_dates(res.panel);
    return res;
}

std::vector<CapStratum> cap_strata(const ReturnPanel& panel, int date_index) {
    if (date_index < 0 || date_index >= panel.n_dates())
        throw DimensionError("cap_strata: date index out of range");
    std::vector<int> eligible;
    for (int a = 0; a < panel.n_assets(); ++a)
        if (std::isfinite(panel.market_cap.at(date_index, a))) eligible.push_back(a);

    std::vector<CapStratum> labels(panel.n_assets(), CapStratum::excluded);
    size_t n = eligible.size();
    if (n == 0) return labels;
    if (n == 1) {  // degenerate quartiles: call the lone asset large
        labels[eligible[0]] = CapStratum::large;
        return labels;
    }
    std::sort(eligible.begin(), eligible.end(), [&](int a, int b) {
        double ca = panel.market_cap.at(date_index, a), cb = panel.market_cap.at(date_index, b);
        if (ca != cb) return ca < cb;
        return panel.assets[a].id < panel.assets[b].id;
    });
    size_t k = (n + 3) / 4;  // ceil(0.25 n)
    for (size_t i = 0; i < n; ++i) {
        if (i < k)
            labels[eligible[i]] = CapStratum::small;
        else if (i >= n - k)
            labels[eligible[i]] = CapStratum::large;
        else
            labels[eligible[i]] = CapStratum::mid;
    }
    return labels;
}

void save_panel_cache(const ReturnPanel& panel, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("panel cache: cannot open for write: " + path);
    os.write("TSFB", 4);
    write_pod<uint16_t>(os, 1);  // format version
    write_pod<uint32_t>(os, uint32_t(panel.n_dates()));
    write_pod<uint32_t>(os, uint32_t(panel.n_assets()));
    for (const auto& d : panel.dates) write_str(os, d);
    for (const auto& a : panel.assets) {
        write_str(os, a.id);
        write_str(os, a.country);
    }
    os.write(reinterpret_cast<const char*>(panel.returns.data.data()),
             std::streamsize(panel.returns.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(panel.market_cap.data.data()),
             std::streamsize(panel.market_cap.size() * sizeof(double)));
    // mask as a bitset
    std::vector<uint8_t> bits((panel.mask.size() + 7) / 8, 0);
    for (size_t i = 0; i < panel.mask.size(); ++i)
        if (panel.mask[i]) bits[i / 8] |= uint8_t(1u << (i % 8));
    os.write(reinterpret_cast<const char*>(bits.data()), std::streamsize(bits.size()));
    if (!os) throw DataError("panel cache: write failed: " + path);
}

ReturnPanel load_panel_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("panel cache: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TSFB", 4) != 0)
        throw DataError("panel cache: bad magic in " + path);
    uint16_t ver = read_pod<uint16_t>(is);
    if (ver != 1) throw DataError("panel cache: unsupported format " + std::to_string(ver));
    uint32_t nd = read_pod<uint32_t>(is), na = read_pod<uint32_t>(is);
    ReturnPanel p;
    for (uint32_t i = 0; i < nd; ++i) p.dates.push_back(read_str(is));
    for (uint32_t i = 0; i < na; ++i) {
        AssetMeta m;
        m.id = read_str(is);
        m.country = read_str(is);
        p.assets.push_back(std::move(m));
    }
    p.returns = Tensor(int(nd), int(na));
    is.read(reinterpret_cast<char*>(p.returns.data.data()),
            std::streamsize(p.returns.size() * sizeof(double)));
    p.market_cap = Tensor(int(nd), int(na));
    is.read(reinterpret_cast<char*>(p.market_cap.data.data()),
            std::streamsize(p.market_cap.size() * sizeof(double)));
    size_t ncell = size_t(nd) * na;
    std::vector<uint8_t> bits((ncell + 7) / 8);
    is.read(reinterpret_cast<char*>(bits.data()), std::streamsize(bits.size()));
    if (!is) throw DataError("panel cache: truncated data");
    p.mask.assign(ncell, 0);
    for (size_t i = 0; i < ncell; ++i)
        p.mask[i] = (bits[i / 8] >> (i % 8)) & 1u;
    p.first_valid.assign(na, -1);
    p.last_valid.assign(na, -1);
    for (uint32_t a = 0; a < na; ++a)
        for (uint32_t d = 0; d < nd; ++d)
            if (p.valid(int(d), int(a))) {
                if (p.first_valid[a] < 0) p.first_valid[a] = int(d);
                p.last_valid[a] = int(d);
            }
    return p;
}

void write_drop_log(const std::vector<DropEntry>& drops, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("drop log: cannot open for write: " + path);
    os << "date,asset_id,reason\n";
    for (const auto& d : drops) os << d.date << ',' << d.asset_id << ',' << d.reason << '\n';
}

}  // namespace tsfb
