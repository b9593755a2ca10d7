#include "tsfb/runconfig.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "tsfb/csv.hpp"
#include "tsfb/gbt.hpp"
#include "tsfb/linreg.hpp"
#include "tsfb/nnbench.hpp"

namespace fs = std::filesystem;

namespace tsfb {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& ctx) {
    if (!j.is_object()) throw ConfigError("config: " + ctx + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in " + ctx);
}

const std::set<std::string> kBenchmarks = {"linear", "lasso", "ridge", "pcr", "gbt", "fnn"};

SignalPattern pattern_from_name(const std::string& s) {
    if (s == "sine") return SignalPattern::sine;
    if (s == "ar1") return SignalPattern::ar1;
    if (s == "step") return SignalPattern::step;
    throw ConfigError("config: unknown signal pattern " + s);
}

}  // namespace

void PanelSourceConfig::validate() const {
    if (kind != "cache" && kind != "csv" && kind != "synthetic")
        throw ConfigError("config: panel.kind must be cache, csv or synthetic");
    if (kind != "synthetic" && path.empty())
        throw ConfigError("config: panel." + kind + " needs a path");
    if (kind == "synthetic") {
        if (assets < 1 || years < 1) throw ConfigError("config: synthetic panel size invalid");
        if (noise_sd < 0) throw ConfigError("config: noise_sd must be >= 0");
        pattern_from_name(pattern);
    }
}

void SynthSectionConfig::validate() const {
    if (count < 0 || len < 2) throw ConfigError("config: synth section invalid");
}

void RunConfig::validate() const {
    if (schema_version != 1) throw ConfigError("config: unsupported schema_version");
    if (out_dir.empty()) throw ConfigError("config: out_dir required");
    panel.validate();
    synth.validate();
    plan.validate();
    for (const auto& b : benchmarks)
        if (!kBenchmarks.count(b)) throw ConfigError("config: unknown benchmark " + b);
    if (schedule.steps < 0 || schedule.batch_size < 1 || schedule.lr <= 0)
        throw ConfigError("config: bad train schedule");
    if (costs.empty()) throw ConfigError("config: at least one cost scenario required");
    bool tsfm = !chronos.is_null() || !timesfm.is_null();
    if (plan.regime == Regime::zero_shot && tsfm && base_checkpoint.empty())
        throw ConfigError("config: zero_shot requires base_checkpoint");
    if (plan.regime == Regime::fine_tune && tsfm && base_checkpoint.empty())
        throw ConfigError("config: fine_tune requires base_checkpoint");
    if (chronos.is_null() && timesfm.is_null() && benchmarks.empty())
        throw ConfigError("config: no models selected");
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["schema_version"] = schema_version;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["panel"] = {{"kind", panel.kind}};
    if (!panel.path.empty()) j["panel"]["path"] = panel.path;
    if (panel.kind == "synthetic") {
        j["panel"]["assets"] = panel.assets;
        j["panel"]["years"] = panel.years;
        j["panel"]["pattern"] = panel.pattern;
        j["panel"]["noise_sd"] = panel.noise_sd;
    }
    j["synth"] = {{"count", synth.count}, {"len", synth.len}};
    j["plan"] = {{"windows", plan.window_sizes},
                 {"train_start_year", plan.train_start_year},
                 {"first_oos_year", plan.first_oos_year},
                 {"last_oos_year", plan.last_oos_year},
                 {"regime", regime_name(plan.regime)},
                 {"scope", plan.scope}};
    j["chronos"] = chronos;
    j["timesfm"] = timesfm;
    if (!base_checkpoint.empty()) j["base_checkpoint"] = base_checkpoint;
    j["benchmarks"] = benchmarks;
    j["train"] = {{"steps", schedule.steps},
                  {"batch_size", schedule.batch_size},
                  {"lr", schedule.lr}};
    nlohmann::json carr = nlohmann::json::array();
    for (const auto& c : costs) carr.push_back(c.mixed ? nlohmann::json("mixed")
                                                       : nlohmann::json(c.fixed_bps));
    j["costs"] = carr;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    check_keys(j, {"schema_version", "seed", "out_dir", "panel", "synth", "plan", "chronos",
                   "timesfm", "base_checkpoint", "benchmarks", "train", "costs"},
               "root");
    RunConfig c;
    c.schema_version = j.value("schema_version", 1);
    c.seed = j.value("seed", uint64_t(1));
    c.out_dir = j.value("out_dir", std::string("out"));

    if (j.contains("panel")) {
        const auto& p = j.at("panel");
        check_keys(p, {"kind", "path", "assets", "years", "pattern", "noise_sd"}, "panel");
        c.panel.kind = p.value("kind", std::string("synthetic"));
        c.panel.path = p.value("path", std::string());
        c.panel.assets = p.value("assets", 100);
        c.panel.years = p.value("years", 6);
        c.panel.pattern = p.value("pattern", std::string("sine"));
        c.panel.noise_sd = p.value("noise_sd", 0.3);
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        check_keys(s, {"count", "len"}, "synth");
        c.synth.count = s.value("count", 8);
        c.synth.len = s.value("len", 512);
    }
    if (j.contains("plan")) {
        const auto& p = j.at("plan");
        check_keys(p, {"windows", "train_start_year", "first_oos_year", "last_oos_year",
                       "regime", "scope"},
                   "plan");
        c.plan.window_sizes = p.value("windows", std::vector<int>{});
        c.plan.train_start_year = p.value("train_start_year", 0);
        c.plan.first_oos_year = p.value("first_oos_year", 0);
        c.plan.last_oos_year = p.value("last_oos_year", 0);
        c.plan.regime = regime_from_name(p.value("regime", std::string("scratch")));
        c.plan.scope = p.value("scope", std::string("local"));
    }
    c.chronos = j.value("chronos", nlohmann::json());
    c.timesfm = j.value("timesfm", nlohmann::json());
    c.base_checkpoint = j.value("base_checkpoint", std::string());
    c.benchmarks = j.value("benchmarks", std::vector<std::string>{});
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, {"steps", "batch_size", "lr"}, "train");
        c.schedule.steps = t.value("steps", 2000);
        c.schedule.batch_size = t.value("batch_size", 64);
        c.schedule.lr = t.value("lr", 1e-3);
    }
    if (j.contains("costs")) {
        c.costs.clear();
        if (!j.at("costs").is_array()) throw ConfigError("config: costs must be an array");
        for (const auto& e : j.at("costs")) {
            if (e.is_string()) {
                if (e.get<std::string>() != "mixed")
                    throw ConfigError("config: unknown cost scenario " + e.get<std::string>());
                c.costs.push_back(CostScenario::mixed_structure());
            } else if (e.is_number()) {
                c.costs.push_back(CostScenario::fixed(e.get<double>()));
            } else {
                throw ConfigError("config: cost entries are numbers (bps) or \"mixed\"");
            }
        }
    } else {
        c.costs = {CostScenario::fixed(0.0)};
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    return RunConfig::from_json(j);
}

ReturnPanel materialize_panel(const RunConfig& cfg) {
    if (cfg.panel.kind == "cache") return load_panel_cache(cfg.panel.path);
    if (cfg.panel.kind == "csv") {
        auto records = parse_raw_csv(cfg.panel.path);
        return clean_pipeline(std::move(records), CleanConfig{}).panel;
    }
    return make_signal_panel(cfg.panel.assets, cfg.panel.years,
                             pattern_from_name(cfg.panel.pattern), cfg.panel.noise_sd, cfg.seed);
}

std::vector<JobSpec> plan_jobs(const RunConfig& cfg) {
    std::vector<JobSpec> jobs;
    for (int w : cfg.plan.window_sizes) {
        if (!cfg.chronos.is_null()) jobs.push_back({"chronos", w});
        if (!cfg.timesfm.is_null()) jobs.push_back({"timesfm", w});
        for (const auto& b : cfg.benchmarks) jobs.push_back({b, w});
    }
    return jobs;
}

namespace {

// date indices of the C most recent valid returns of asset a strictly before
// d (same convention as the evaluation protocol's context builder)
std::vector<int> context_indices(const ReturnPanel& panel, int d, int a, int C) {
    std::vector<int> idx;
    for (int t = d - 1; t >= 0 && int(idx.size()) < C; --t)
        if (panel.valid(t, a)) idx.push_back(t);
    if (int(idx.size()) < C) return {};
    std::reverse(idx.begin(), idx.end());
    return idx;
}

std::vector<double> tensor_row(const Tensor& X, int r) {
    std::vector<double> x(size_t(X.cols), 0.0);
    for (int c = 0; c < X.cols; ++c) x[size_t(c)] = X.at(r, c);
    return x;
}

using Predictor = std::function<double(const std::vector<double>&)>;

Predictor fit_benchmark(const std::string& family, const Tensor& X, const std::vector<double>& y,
                        uint64_t seed, std::string& size_tag) {
    if (family == "linear" || family == "lasso" || family == "ridge") {
        PenaltySpec pen = family == "lasso"   ? PenaltySpec::lasso(1e-4)
                          : family == "ridge" ? PenaltySpec::ridge(1e-3)
                                              : PenaltySpec::none();
        auto m = std::make_shared<LinearModel>(fit_huber_linear(X, y, pen));
        size_tag = "huber";
        return [m](const std::vector<double>& x) { return m->predict(x); };
    }
    if (family == "pcr") {
        int k = std::min(5, X.cols);
        auto m = std::make_shared<PCRModel>(fit_pcr(X, y, k));
        size_tag = "k" + std::to_string(k);
        return [m](const std::vector<double>& x) { return m->predict(x); };
    }
    if (family == "gbt") {
        GbtParams params;
        params.rounds = 60;
        params.max_depth = 3;
        params.early_stop_rounds = 10;
        auto m = std::make_shared<BoostedEnsemble>(boost(X, y, params));
        size_tag = "t" + std::to_string(m->trees.size());
        return [m](const std::vector<double>& x) { return m->predict(x); };
    }
    if (family == "fnn") {
        FnnSpec spec;
        spec.input_dim = X.cols;
        spec.hidden_units = 16;
        spec.epochs = 15;
        auto m = std::make_shared<FnnModel>(spec, seed);
        fnn_train(*m, X, y, seed);
        size_tag = "h" + std::to_string(spec.hidden_units);
        return [m](const std::vector<double>& x) { return m->predict(x); };
    }
    throw ConfigError("run: unknown benchmark family " + family);
}

}  // namespace

ForecastSet run_benchmark(const ReturnPanel& panel, const ExperimentPlan& plan,
                          const std::string& family, int window, uint64_t seed) {
    ForecastSet out;
    for (const Vintage& v : build_vintages(plan, panel)) {
        PairSet pairs = build_training_pairs(panel, window, v.train_begin, v.train_end);
        if (pairs.y.empty()) continue;
        std::string size_tag;
        Predictor predict =
            fit_benchmark(family, pairs.X, pairs.y, seed ^ uint64_t(v.cutoff_year), size_tag);
        std::string model_id =
            make_model_id(family, size_tag, Regime::scratch, plan.scope, window, v.cutoff_year);
        for (int t = v.eval_begin; t < v.eval_end; ++t)
            for (int a = 0; a < panel.n_assets(); ++a) {
                auto idx = context_indices(panel, t, a, window);
                if (idx.empty()) continue;
                std::vector<double> ctx;
                ctx.reserve(idx.size());
                for (int u : idx) ctx.push_back(panel.ret(u, a));
                ForecastRecord r;
                r.date = panel.dates[size_t(t)];
                r.asset_id = panel.assets[size_t(a)].id;
                r.window = window;
                r.model_id = model_id;
                r.regime = regime_name(Regime::scratch);
                r.y_pred = predict(ctx);
                r.n_samples = 1;
                if (panel.valid(t, a)) r.y_true = panel.ret(t, a);
                r.date_index = t;
                r.context_first = idx.front();
                r.context_last = idx.back();
                out.records.push_back(std::move(r));
            }
    }
    return out;
}

ForecastSet run_tsfm(const ReturnPanel& panel, const RunConfig& cfg, const std::string& family,
                     int window, std::vector<std::pair<int, Checkpoint>>* checkpoints) {
    const nlohmann::json& model_cfg = family == "chronos" ? cfg.chronos : cfg.timesfm;
    std::optional<Checkpoint> base;
    if (!cfg.base_checkpoint.empty()) base = Checkpoint::load(cfg.base_checkpoint);

    ForecastSet out;
    for (const Vintage& v : build_vintages(cfg.plan, panel)) {
        RegimeRun run = run_regime(panel, v, window, family, cfg.plan.regime, model_cfg, base,
                                   cfg.schedule, cfg.plan.scope, cfg.seed);
        out.records.insert(out.records.end(), run.forecasts.records.begin(),
                           run.forecasts.records.end());
        if (run.checkpoint) {
            if (checkpoints) checkpoints->push_back({v.cutoff_year, *run.checkpoint});
            // expanding fine-tune: the next vintage continues from this one
            if (cfg.plan.regime == Regime::fine_tune) base = *run.checkpoint;
        }
    }
    return out;
}

uint64_t fnv1a(const void* data, size_t len, uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::string bundle_hash(const std::string& dir, const std::vector<std::string>& rel_paths) {
    std::vector<std::string> sorted = rel_paths;
    std::sort(sorted.begin(), sorted.end());
    uint64_t h = 1469598103934665603ULL;
    for (const auto& rel : sorted) {
        h = fnv1a(rel.data(), rel.size(), h);
        std::ifstream in(dir + "/" + rel, std::ios::binary);
        if (!in) throw DataError("bundle hash: missing artifact " + rel);
        std::ostringstream ss;
        ss << in.rdbuf();
        std::string bytes = ss.str();
        h = fnv1a(bytes.data(), bytes.size(), h);
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json load_manifest(const std::string& dir) {
    std::ifstream in(dir + "/MANIFEST.json");
    if (!in) throw DataError("report: no MANIFEST.json in " + dir);
    nlohmann::json j;
    in >> j;
    return j;
}

std::vector<double> cum_log_returns(const std::vector<double>& daily) {
    std::vector<double> out;
    out.reserve(daily.size());
    double acc = 0.0;
    for (double r : daily) {
        acc += std::log1p(r);
        out.push_back(acc);
    }
    return out;
}

namespace {

void write_yearly_sharpe_csv(const std::vector<YearlySharpe>& ys, const std::string& path) {
    std::ofstream os(path);
    os << "year,sharpe,n_days,low_sample\n";
    char buf[64];
    for (const auto& y : ys) {
        os << y.year << ',';
        if (y.sharpe) {
            std::snprintf(buf, sizeof buf, "%.17g", *y.sharpe);
            os << buf;
        }
        os << ',' << y.n_days << ',' << (y.low_sample ? 1 : 0) << '\n';
    }
}

std::optional<double> overall_avg_r2(const MetricReport& report) {
    for (const auto& row : report.rows)
        if (row.year == -1 && row.stratum == "full") return row.r2;
    return std::nullopt;
}

}  // namespace

RunSummary run_pipeline(const RunConfig& cfg, bool dry_run, bool raw_kurtosis,
                        std::ostream& log) {
    cfg.validate();
    ReturnPanel panel = materialize_panel(cfg);
    auto vintages = build_vintages(cfg.plan, panel);
    auto jobs = plan_jobs(cfg);

    log << "panel: " << panel.n_dates() << " dates x " << panel.n_assets() << " assets\n";
    log << "vintages:";
    for (const auto& v : vintages) log << " " << v.cutoff_year << "->" << v.cutoff_year + 1;
    log << "\njobs (" << jobs.size() << "):";
    for (const auto& j : jobs) log << " " << j.job_id();
    log << "\n";

    RunSummary summary;
    if (dry_run) {
        log << "dry run: no artifacts written\n";
        summary.all_complete = true;
        summary.exit_code = 0;
        return summary;
    }

    fs::create_directories(cfg.out_dir);
    std::vector<std::string> artifacts;
    std::set<std::string> seen_paths;
    auto track = [&](const std::string& rel) {
        if (!seen_paths.insert(rel).second)
            throw ConfigError("run: artifact path collision " + rel);
        artifacts.push_back(rel);
    };

    nlohmann::json manifest_jobs = nlohmann::json::array();
    bool all_ok = true;

    for (const auto& job : jobs) {
        nlohmann::json entry = {{"job_id", job.job_id()},
                                {"family", job.family},
                                {"window", job.window}};
        std::vector<std::string> job_artifacts;
        try {
            const std::string rel_dir = "jobs/" + job.job_id();
            fs::create_directories(cfg.out_dir + "/" + rel_dir);

            ForecastSet fs_set;
            std::vector<std::pair<int, Checkpoint>> cks;
            if (job.family == "chronos" || job.family == "timesfm")
                fs_set = run_tsfm(panel, cfg, job.family, job.window, &cks);
            else
                fs_set = run_benchmark(panel, cfg.plan, job.family, job.window, cfg.seed);
            if (fs_set.records.empty()) throw DataError("run: job produced no forecasts");

            auto put = [&](const std::string& name) {
                std::string rel = rel_dir + "/" + name;
                job_artifacts.push_back(rel);
                return cfg.out_dir + "/" + rel;
            };
            fs_set.save_csv(put("forecasts.csv"));
            MetricReport metrics = yearly_average_report(fs_set, panel);
            metrics.save_csv(put("metrics.csv"));
            {
                std::ofstream os(put("metrics.json"));
                os << metrics.to_json().dump(2) << '\n';
            }
            PortfolioLedger ledger = build_ledger(fs_set, panel, cfg.costs);
            ledger.save_csv(put("ledger.csv"));
            {
                std::ofstream os(put("perf.json"));
                os << perf_report(ledger, raw_kurtosis).dump(2) << '\n';
            }
            spread_table(fs_set, panel).save_csv(put("spread.csv"));
            write_yearly_sharpe_csv(yearly_sharpe_series(ledger), put("yearly_sharpe.csv"));
            for (const auto& [year, ck] : cks)
                ck.save(put("checkpoint_" + std::to_string(year) + ".tsfc"));

            // digest line in the yearly-metrics table layout
            auto r2 = overall_avg_r2(metrics);
            auto gross = perf_stats(ledger_series(ledger, "ls_gross"), raw_kurtosis);
            char line[256];
            std::snprintf(line, sizeof line, "%-14s w=%-4d n=%-7zu r2_oos=%-9s sharpe=%-8s",
                          job.family.c_str(), job.window, fs_set.records.size(),
                          r2 ? std::to_string(*r2).c_str() : "n/a",
                          gross.sharpe ? std::to_string(*gross.sharpe).c_str() : "n/a");
            log << line << "\n";

            for (const auto& rel : job_artifacts) track(rel);
            entry["status"] = "complete";
        } catch (const std::exception& e) {
            entry["status"] = std::string("failed: ") + e.what();
            all_ok = false;
            log << job.job_id() << " FAILED: " << e.what() << "\n";
        }
        entry["artifacts"] = job_artifacts;
        manifest_jobs.push_back(entry);
    }

    summary.bundle_hash = bundle_hash(cfg.out_dir, artifacts);
    summary.manifest = {{"schema_version", cfg.schema_version},
                        {"seed", cfg.seed},
                        {"complete", all_ok},
                        {"bundle_hash", summary.bundle_hash},
                        {"config", cfg.to_json()},
                        {"jobs", manifest_jobs}};
    {
        std::ofstream os(cfg.out_dir + "/MANIFEST.json");
        os << summary.manifest.dump(2) << '\n';
    }
    summary.all_complete = all_ok;
    summary.exit_code = all_ok ? 0 : 1;
    log << "bundle hash " << summary.bundle_hash << (all_ok ? " (complete)" : " (INCOMPLETE)")
        << "\n";
    return summary;
}

void write_report(const std::string& artifacts_dir, std::ostream& log) {
    nlohmann::json manifest = load_manifest(artifacts_dir);
    fs::create_directories(artifacts_dir + "/report");

    nlohmann::json merged = nlohmann::json::array();
    int written = 0;
    for (const auto& job : manifest.at("jobs")) {
        if (job.at("status") != "complete") continue;
        std::string job_id = job.at("job_id");
        std::string ledger_path = artifacts_dir + "/jobs/" + job_id + "/ledger.csv";
        csv::Table t = csv::read_file(ledger_path);
        int ci = t.col("ls_gross"), cd = t.col("date");
        std::vector<double> daily;
        for (const auto& row : t.rows) daily.push_back(std::stod(row[size_t(ci)]));
        auto cum = cum_log_returns(daily);
        {
            std::ofstream os(artifacts_dir + "/report/cumlog_" + job_id + ".csv");
            os << "date,cum_log_return\n";
            char buf[64];
            for (size_t i = 0; i < cum.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g", cum[i]);
                os << t.rows[i][size_t(cd)] << ',' << buf << '\n';
            }
        }
        std::ifstream min(artifacts_dir + "/jobs/" + job_id + "/metrics.json");
        nlohmann::json mj;
        min >> mj;
        merged.push_back({{"job_id", job_id}, {"metrics", mj}});
        ++written;
    }
    {
        std::ofstream os(artifacts_dir + "/report/metrics_merged.json");
        os << merged.dump(2) << '\n';
    }
    log << "report: " << written << " jobs consolidated under " << artifacts_dir << "/report\n";
}

AuditResult audit_from_config(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    std::string family;
    if (!cfg.chronos.is_null())
        family = "chronos";
    else if (!cfg.timesfm.is_null())
        family = "timesfm";
    else
        throw ConfigError("audit: needs a chronos or timesfm model in the config");
    if (cfg.plan.window_sizes.empty()) throw ConfigError("audit: plan has no windows");
    int window = cfg.plan.window_sizes.front();

    ReturnPanel panel = materialize_panel(cfg);
    auto vintages = build_vintages(cfg.plan, panel);
    if (vintages.empty()) throw ConfigError("audit: no vintages under the plan");
    Vintage v = vintages.front();
    int cutoff = v.train_end;

    // perturb every valid post-cutoff cell; training must not see any of it
    ReturnPanel mutated = panel;
    for (int t = cutoff; t < panel.n_dates(); ++t)
        for (int a = 0; a < panel.n_assets(); ++a)
            if (mutated.valid(t, a)) mutated.returns.at(t, a) += 1e-4 * double(1 + (a % 3));

    // scratch regime so the audit covers training as well as inference
    auto run = [&](const ReturnPanel& p) {
        return run_regime(p, v, window, family, Regime::scratch,
                          family == "chronos" ? cfg.chronos : cfg.timesfm, std::nullopt,
                          cfg.schedule, cfg.plan.scope, cfg.seed);
    };
    AuditResult res = lookahead_audit(panel, mutated, cutoff, run);
    log << "audit " << family << " w=" << window << " cutoff_index=" << cutoff
        << ": checkpoint_identical=" << res.checkpoint_identical
        << " forecasts_identical=" << res.forecasts_identical
        << " compared=" << res.compared_forecasts << " -> "
        << (res.pass ? "PASS" : "FAIL") << "\n";
    return res;
}

}  // namespace tsfb
