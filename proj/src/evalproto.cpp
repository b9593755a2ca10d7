#include "tsfb/evalproto.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>

namespace tsfb {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::zero_shot: return "zero_shot";
        case Regime::fine_tune: return "fine_tune";
        case Regime::scratch: return "scratch";
    }
    throw ConfigError("unknown regime");
}

Regime regime_from_name(const std::string& s) {
    if (s == "zero_shot") return Regime::zero_shot;
    if (s == "fine_tune") return Regime::fine_tune;
    if (s == "scratch") return Regime::scratch;
    throw ConfigError("unknown regime: " + s);
}

void ExperimentPlan::validate() const {
    if (window_sizes.empty()) throw ConfigError("plan: empty window set");
    for (int w : window_sizes)
        if (w != 5 && w != 21 && w != 252 && w != 512)
            throw ConfigError("plan: window must be one of {5, 21, 252, 512}");
    if (!(train_start_year < first_oos_year))
        throw ConfigError("plan: train_start_year must precede first_oos_year");
    if (!(first_oos_year <= last_oos_year))
        throw ConfigError("plan: first_oos_year must not exceed last_oos_year");
    if (scope != "local" && scope != "global" && scope != "augmented" &&
        scope != "synthetic_augmented")
        throw ConfigError("plan: unknown scope " + scope);
}

int date_year(const std::string& iso_date) {
    if (iso_date.size() < 4) throw DataError("bad iso date: " + iso_date);
    return std::stoi(iso_date.substr(0, 4));
}

std::vector<Vintage> build_vintages(const ExperimentPlan& plan, const ReturnPanel& panel) {
    plan.validate();
    const int n = panel.n_dates();
    auto lower_year = [&](int year) {
        // first date index with date_year >= year
        int lo = 0, hi = n;
        while (lo < hi) {
            int mid = (lo + hi) / 2;
            if (date_year(panel.dates[size_t(mid)]) < year)
                lo = mid + 1;
            else
                hi = mid;
        }
        return lo;
    };

    std::vector<Vintage> out;
    for (int Y = plan.first_oos_year - 1; Y <= plan.last_oos_year - 1; ++Y) {
        Vintage v;
        v.cutoff_year = Y;
        v.train_begin = lower_year(plan.train_start_year);
        v.train_end = lower_year(Y + 1);
        v.eval_begin = v.train_end;
        v.eval_end = lower_year(Y + 2);
        if (v.train_begin >= v.train_end)
            throw ConfigError("plan: empty training slice for cutoff " + std::to_string(Y));
        out.push_back(v);
    }
    return out;
}

int tuning_train_rows(int n_rows) {
    int n_val = int(std::floor(0.1 * n_rows));
    return std::max(1, n_rows - n_val);
}

int tune_first_year(int grid_size, const std::function<double(int)>& score) {
    if (grid_size < 1) throw ConfigError("tune: empty grid");
    int best = 0;
    double best_score = score(0);
    for (int j = 1; j < grid_size; ++j) {
        double s = score(j);
        if (s < best_score) {
            best = j;
            best_score = s;
        }
    }
    return best;
}

namespace {

std::vector<int> trailing_indices(const ReturnPanel& panel, int d, int a, int C, int earliest) {
    std::vector<int> idx;
    for (int t = d - 1; t >= earliest && int(idx.size()) < C; --t)
        if (panel.valid(t, a)) idx.push_back(t);
    if (int(idx.size()) < C) return {};
    std::reverse(idx.begin(), idx.end());
    return idx;
}

}  // namespace

std::vector<double> trailing_context(const ReturnPanel& panel, int d, int a, int C,
                                     int earliest) {
    std::vector<int> idx = trailing_indices(panel, d, a, C, earliest);
    std::vector<double> out;
    out.reserve(idx.size());
    for (int t : idx) out.push_back(panel.ret(t, a));
    return out;
}

PairSet build_training_pairs(const ReturnPanel& panel, int window, int d_begin, int d_end) {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    std::vector<int> ds;
    for (int t = d_begin; t < d_end; ++t)
        for (int a = 0; a < panel.n_assets(); ++a) {
            if (!panel.valid(t, a)) continue;
            std::vector<double> ctx = trailing_context(panel, t, a, window, d_begin);
            if (int(ctx.size()) != window) continue;
            xs.push_back(std::move(ctx));
            ys.push_back(panel.ret(t, a));
            ds.push_back(t);
        }
    PairSet ps;
    ps.X = Tensor(int(xs.size()), window);
    for (size_t i = 0; i < xs.size(); ++i)
        for (int j = 0; j < window; ++j) ps.X.at(int(i), j) = xs[i][size_t(j)];
    ps.y = std::move(ys);
    ps.dates = std::move(ds);
    return ps;
}

void ForecastSet::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("forecasts: cannot open for write: " + path);
    os << "date,asset_id,window,model,regime,y_pred,up_prob,n_samples\n";
    char buf[64];
    for (const auto& r : records) {
        os << r.date << ',' << r.asset_id << ',' << r.window << ',' << r.model_id << ','
           << r.regime << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.y_pred);
        os << buf << ',';
        if (r.up_prob) {
            std::snprintf(buf, sizeof buf, "%.17g", *r.up_prob);
            os << buf;
        }
        os << ',' << r.n_samples << '\n';
    }
    if (!os) throw DataError("forecasts: write failed: " + path);
}

std::string make_model_id(const std::string& family, const std::string& size, Regime regime,
                          const std::string& scope, int window, int cutoff_year) {
    return family + "/" + size + "/" + regime_name(regime) + "/" + scope + "/w" +
           std::to_string(window) + "/" + std::to_string(cutoff_year);
}

namespace {

constexpr int kChronosForecastSamples = 20;

struct Candidate {
    int date = 0;
    int asset = 0;
};

std::vector<Candidate> training_candidates(const ReturnPanel& panel, const Vintage& v,
                                           int window) {
    std::vector<Candidate> out;
    for (int t = v.train_begin; t < v.train_end; ++t)
        for (int a = 0; a < panel.n_assets(); ++a) {
            if (!panel.valid(t, a)) continue;
            if (trailing_indices(panel, t, a, window, v.train_begin).empty()) continue;
            out.push_back({t, a});
        }
    return out;
}

std::vector<double> candidate_window(const ReturnPanel& panel, const Vintage& v,
                                     const Candidate& c, int window) {
    std::vector<double> w = trailing_context(panel, c.date, c.asset, window, v.train_begin);
    w.push_back(panel.ret(c.date, c.asset));
    return w;
}

}  // namespace

RegimeRun run_regime(const ReturnPanel& panel, const Vintage& v, int window,
                     const std::string& family, Regime regime, const nlohmann::json& config,
                     const std::optional<Checkpoint>& base, const TrainSchedule& schedule,
                     const std::string& scope, uint64_t seed) {
    if ((regime == Regime::zero_shot || regime == Regime::fine_tune) && !base)
        throw ConfigError("regime " + regime_name(regime) + " requires a base checkpoint");

    RegimeRun run;
    std::vector<Candidate> cands;
    if (regime != Regime::zero_shot) {
        cands = training_candidates(panel, v, window);
        if (cands.empty())
            throw DataError("run_regime: no training windows in the vintage slice");
    }
    auto srng = std::make_shared<Rng>(Rng(seed).fork(0x7EA1));

    auto emit = [&](const std::string& model_id,
                    const std::function<std::pair<double, std::optional<double>>(
                        const std::vector<double>&, uint64_t)>& fc,
                    int n_samples) {
        for (int t = v.eval_begin; t < v.eval_end; ++t)
            for (int a = 0; a < panel.n_assets(); ++a) {
                std::vector<int> idx = trailing_indices(panel, t, a, window, 0);
                if (idx.empty()) continue;
                std::vector<double> ctx;
                ctx.reserve(idx.size());
                for (int u : idx) ctx.push_back(panel.ret(u, a));
                uint64_t salt = uint64_t(t) * uint64_t(panel.n_assets()) + uint64_t(a);
                auto [y_pred, up_prob] = fc(ctx, salt);
                ForecastRecord r;
                r.date = panel.dates[size_t(t)];
                r.asset_id = panel.assets[size_t(a)].id;
                r.window = window;
                r.model_id = model_id;
                r.regime = regime_name(regime);
                r.y_pred = y_pred;
                r.up_prob = up_prob;
                r.n_samples = n_samples;
                if (panel.valid(t, a)) r.y_true = panel.ret(t, a);
                r.date_index = t;
                r.context_first = idx.front();
                r.context_last = idx.back();
                run.forecasts.records.push_back(std::move(r));
            }
    };

    if (family == "chronos") {
        std::unique_ptr<ChronosModel> model;
        if (regime == Regime::scratch)
            model = std::make_unique<ChronosModel>(ChronosConfig::from_json(config), seed);
        else
            model = std::make_unique<ChronosModel>(ChronosModel::from_checkpoint(*base));
        if (window > model->config().max_context)
            throw ConfigError("chronos: window exceeds max_context");
        if (regime != Regime::zero_shot) {
            auto source = [&, srng](int) {
                const Candidate& c = cands[size_t(srng->below(cands.size()))];
                return candidate_window(panel, v, c, window);
            };
            TrainResult tr = model->train(source, schedule, seed ^ 0xC0FFEE);
            run.training_steps = tr.steps_completed;
        }
        std::string model_id =
            make_model_id("chronos", "d" + std::to_string(model->config().model_dim), regime,
                          scope, window, v.cutoff_year);
        emit(model_id,
             [&](const std::vector<double>& ctx, uint64_t salt) {
                 Rng frng = Rng(seed ^ 0xF0CA57ULL).fork(salt);
                 std::vector<double> draws =
                     model->forecast_distribution(ctx, kChronosForecastSamples, frng);
                 auto [point, up] = point_and_direction(draws);
                 return std::make_pair(point, std::optional<double>(up));
             },
             kChronosForecastSamples);
        if (regime != Regime::zero_shot)
            run.checkpoint = model->to_checkpoint(
                {{"model_id", model_id}, {"cutoff_year", v.cutoff_year}, {"scope", scope}});
    } else if (family == "timesfm") {
        std::unique_ptr<TimesFmModel> model;
        if (regime == Regime::scratch)
            model = std::make_unique<TimesFmModel>(TimesFmConfig::from_json(config), seed);
        else
            model = std::make_unique<TimesFmModel>(TimesFmModel::from_checkpoint(*base));
        if (regime != Regime::zero_shot) {
            int bs = std::max(1, schedule.batch_size);
            auto source = [&, srng, bs](int) {
                std::vector<std::vector<double>> batch;
                batch.reserve(size_t(bs));
                for (int i = 0; i < bs; ++i) {
                    const Candidate& c = cands[size_t(srng->below(cands.size()))];
                    batch.push_back(candidate_window(panel, v, c, window));
                }
                return batch;
            };
            TrainResult tr = model->train(source, schedule, seed ^ 0xC0FFEE);
            run.training_steps = tr.steps_completed;
        }
        std::string model_id =
            make_model_id("timesfm", "h" + std::to_string(model->config().patch.embed_dim),
                          regime, scope, window, v.cutoff_year);
        emit(model_id,
             [&](const std::vector<double>& ctx, uint64_t) {
                 double point = model->rolling_forecast(ctx, 1).back();
                 double up = sign_direction(point) ? 1.0 : 0.0;
                 return std::make_pair(point, std::optional<double>(up));
             },
             1);
        if (regime != Regime::zero_shot)
            run.checkpoint = model->to_checkpoint(
                {{"model_id", model_id}, {"cutoff_year", v.cutoff_year}, {"scope", scope}});
    } else {
        throw ConfigError("run_regime: unknown family " + family);
    }
    return run;
}

std::optional<double> r2_oos(const std::vector<ForecastRecord>& records) {
    double num = 0.0, den = 0.0;
    bool any = false;
    for (const auto& r : records) {
        if (!r.y_true) continue;
        any = true;
        double e = *r.y_true - r.y_pred;
        num += e * e;
        den += *r.y_true * *r.y_true;
    }
    if (!any || den == 0.0) return std::nullopt;
    return 100.0 * (1.0 - num / den);
}

DirectionMetrics direction_metrics(const std::vector<ForecastRecord>& records) {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& r : records) {
        if (!r.y_true) continue;
        bool pred_up = r.up_prob ? (*r.up_prob > 0.5) : (r.y_pred > 0.0);
        bool real_up = *r.y_true > 0.0;
        if (real_up && pred_up) ++tp;
        else if (real_up && !pred_up) ++fn;
        else if (!real_up && pred_up) ++fp;
        else ++tn;
    }
    DirectionMetrics m;
    m.n = int(tp + fp + fn + tn);
    if (m.n == 0) return m;
    m.overall = 100.0 * double(tp + tn) / double(m.n);
    m.up_acc = (tp + fn) > 0 ? 100.0 * double(tp) / double(tp + fn) : 0.0;
    m.down_acc = (tn + fp) > 0 ? 100.0 * double(tn) / double(tn + fp) : 0.0;
    // per-class f1 with the empty-class convention f1 = 0
    double f1_up = (2 * tp + fp + fn) > 0 ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0;
    double f1_dn = (2 * tn + fn + fp) > 0 ? 2.0 * double(tn) / double(2 * tn + fn + fp) : 0.0;
    m.macro_f1 = 0.5 * (f1_up + f1_dn);
    return m;
}

namespace {

const char* stratum_name(CapStratum s) {
    switch (s) {
        case CapStratum::small: return "small";
        case CapStratum::mid: return "mid";
        case CapStratum::large: return "large";
        default: return "excluded";
    }
}

void write_cell(std::ostream& os, const std::optional<double>& v) {
    if (v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", *v);
        os << buf;
    }
}

}  // namespace

void MetricReport::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("report: cannot open for write: " + path);
    os << "year,stratum,window,model,r2_oos,overall_acc,up_acc,down_acc,macro_f1\n";
    for (const auto& r : rows) {
        if (r.year < 0)
            os << "avg";
        else
            os << r.year;
        os << ',' << r.stratum << ',' << r.window << ',' << r.model << ',';
        write_cell(os, r.r2);
        os << ',';
        write_cell(os, r.overall_acc);
        os << ',';
        write_cell(os, r.up_acc);
        os << ',';
        write_cell(os, r.down_acc);
        os << ',';
        write_cell(os, r.macro_f1);
        os << '\n';
    }
    if (!os) throw DataError("report: write failed: " + path);
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j = {{"year", r.year < 0 ? nlohmann::json("avg") : nlohmann::json(r.year)},
                            {"stratum", r.stratum},
                            {"window", r.window},
                            {"model", r.model}};
        j["r2_oos"] = r.r2 ? nlohmann::json(*r.r2) : nlohmann::json();
        j["overall_acc"] = r.overall_acc ? nlohmann::json(*r.overall_acc) : nlohmann::json();
        j["up_acc"] = r.up_acc ? nlohmann::json(*r.up_acc) : nlohmann::json();
        j["down_acc"] = r.down_acc ? nlohmann::json(*r.down_acc) : nlohmann::json();
        j["macro_f1"] = r.macro_f1 ? nlohmann::json(*r.macro_f1) : nlohmann::json();
        if (r.year < 0) j["n_years"] = r.n_years;
        arr.push_back(std::move(j));
    }
    return {{"rows", arr}};
}

MetricReport yearly_average_report(const ForecastSet& forecasts, const ReturnPanel& panel) {
    std::map<std::string, int> asset_index;
    for (int a = 0; a < panel.n_assets(); ++a) asset_index[panel.assets[size_t(a)].id] = a;
    std::map<int, std::vector<CapStratum>> strata_cache;

    // (model, window, stratum, year) -> records
    std::map<std::tuple<std::string, int, std::string, int>, std::vector<ForecastRecord>>
        groups;
    for (const auto& r : forecasts.records) {
        int year = date_year(r.date);
        groups[{r.model_id, r.window, "full", year}].push_back(r);
        if (r.date_index < 0) continue;
        auto it = strata_cache.find(r.date_index);
        if (it == strata_cache.end())
            it = strata_cache.emplace(r.date_index, cap_strata(panel, r.date_index)).first;
        auto ai = asset_index.find(r.asset_id);
        if (ai == asset_index.end()) continue;
        CapStratum s = it->second[size_t(ai->second)];
        if (s == CapStratum::large || s == CapStratum::small)
            groups[{r.model_id, r.window, stratum_name(s), year}].push_back(r);
    }

    MetricReport report;
    // (model, window, stratum) -> yearly rows for averaging
    std::map<std::tuple<std::string, int, std::string>, std::vector<MetricRow>> yearly;
    for (const auto& [key, recs] : groups) {
        const auto& [model, window, stratum, year] = key;
        MetricRow row;
        row.year = year;
        row.stratum = stratum;
        row.window = window;
        row.model = model;
        row.r2 = r2_oos(recs);
        DirectionMetrics dm = direction_metrics(recs);
        if (dm.n > 0) {
            row.overall_acc = dm.overall;
            row.up_acc = dm.up_acc;
            row.down_acc = dm.down_acc;
            row.macro_f1 = dm.macro_f1;
        }
        report.rows.push_back(row);
        yearly[{model, window, stratum}].push_back(row);
    }
    for (const auto& [key, rows] : yearly) {
        const auto& [model, window, stratum] = key;
        MetricRow avg;
        avg.year = -1;
        avg.stratum = stratum;
        avg.window = window;
        avg.model = model;
        auto mean_of = [&](const std::function<std::optional<double>(const MetricRow&)>& get,
                           int* n_out) {
            double acc = 0;
            int n = 0;
            for (const auto& r : rows)
                if (auto v = get(r)) {
                    acc += *v;
                    ++n;
                }
            if (n_out) *n_out = n;
            return n > 0 ? std::optional<double>(acc / n) : std::nullopt;
        };
        avg.r2 = mean_of([](const MetricRow& r) { return r.r2; }, &avg.n_years);
        avg.overall_acc = mean_of([](const MetricRow& r) { return r.overall_acc; }, nullptr);
        avg.up_acc = mean_of([](const MetricRow& r) { return r.up_acc; }, nullptr);
        avg.down_acc = mean_of([](const MetricRow& r) { return r.down_acc; }, nullptr);
        avg.macro_f1 = mean_of([](const MetricRow& r) { return r.macro_f1; }, nullptr);
        report.rows.push_back(std::move(avg));
    }
    return report;
}

AuditResult lookahead_audit(const ReturnPanel& original, const ReturnPanel& mutated,
                            int cutoff_date_index,
                            const std::function<RegimeRun(const ReturnPanel&)>& run) {
    RegimeRun a = run(original);
    RegimeRun b = run(mutated);

    AuditResult res;
    if (a.checkpoint.has_value() != b.checkpoint.has_value())
        res.checkpoint_identical = false;
    else if (!a.checkpoint)
        res.checkpoint_identical = true;  // zero_shot: nothing written by either
    else
        res.checkpoint_identical = a.checkpoint->bitwise_equal(*b.checkpoint);

    std::map<std::tuple<std::string, std::string, int>, const ForecastRecord*> bmap;
    for (const auto& r : b.forecasts.records)
        bmap[{r.date, r.asset_id, r.window}] = &r;

    res.forecasts_identical = true;
    for (const auto& r : a.forecasts.records) {
        if (r.context_first < 0 || r.context_last >= cutoff_date_index) continue;
        ++res.compared_forecasts;
        auto it = bmap.find({r.date, r.asset_id, r.window});
        if (it == bmap.end()) {
            res.forecasts_identical = false;
            continue;
        }
        const ForecastRecord& o = *it->second;
        if (r.y_pred != o.y_pred || r.up_prob.has_value() != o.up_prob.has_value() ||
            (r.up_prob && *r.up_prob != *o.up_prob))
            res.forecasts_identical = false;
    }
    res.pass = res.checkpoint_identical && res.forecasts_identical;
    return res;
}

}  // namespace tsfb
