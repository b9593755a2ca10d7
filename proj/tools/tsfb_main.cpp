#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tsfb/runconfig.hpp"

using namespace tsfb;

namespace {

int cmd_clean(const std::string& input, const std::string& out_dir, bool eval_universe) {
    try {
        auto records = parse_raw_csv(input);
        CleanConfig cfg;
        cfg.eval_universe = eval_universe;
        CleanResult res = clean_pipeline(std::move(records), cfg);
        std::filesystem::create_directories(out_dir);
        save_panel_cache(res.panel, out_dir + "/panel.tsfb");
        write_drop_log(res.drops, out_dir + "/drops.csv");
        std::cout << "observations: " << res.panel.unmasked_count() << "\n"
                  << "securities:   " << res.panel.n_assets() << "\n"
                  << "dates:        " << res.panel.n_dates() << "\n"
                  << "dropped:      " << res.drops.size() << "\n";
        return 0;
    } catch (const DataError& e) {
        std::cerr << "clean: " << e.what() << "\n";
        return 2;
    }
}

int cmd_synth(const RunConfig& cfg, const std::string& out_path) {
    BankConfig bank;
    bank.grid_n = cfg.synth.len;
    std::ofstream os(out_path);
    if (!os) {
        std::cerr << "synth: cannot open " << out_path << "\n";
        return 1;
    }
    os << "series,step,value\n";
    Rng rng(cfg.seed);
    char buf[64];
    for (int i = 0; i < cfg.synth.count; ++i) {
        KernelSpec spec = sample_kernel_spec(rng, bank);
        SyntheticSeries s = gp_sample(spec, cfg.synth.len, cfg.seed ^ uint64_t(i));
        for (size_t t = 0; t < s.values.size(); ++t) {
            std::snprintf(buf, sizeof buf, "%.17g", s.values[t]);
            os << i << ',' << t << ',' << buf << '\n';
        }
    }
    std::cout << "synth: wrote " << cfg.synth.count << " series of length " << cfg.synth.len
              << " to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-series forecasting laboratory"};
    app.require_subcommand(1);

    std::string config_path, input, out_dir = "out", synth_out = "synth.csv", report_dir;
    uint64_t seed_override = 0;
    bool has_seed = false, dry_run = false, raw_kurtosis = false, eval_universe = false;

    auto* clean = app.add_subcommand("clean", "clean a raw CSV into a panel cache");
    clean->add_option("--input", input, "raw CSV path")->required();
    clean->add_option("--out-dir", out_dir, "artifact directory");
    clean->add_flag("--eval-universe", eval_universe, "apply the $5 minimum-price screen");

    auto* synth = app.add_subcommand("synth", "sample synthetic GP series");
    synth->add_option("--config", config_path, "run config JSON")->required();
    synth->add_option("--out", synth_out, "output CSV path");

    auto* run = app.add_subcommand("run", "execute the full experiment plan");
    run->add_option("--config", config_path, "run config JSON")->required();
    auto* seed_opt = run->add_option("--seed", seed_override, "override the config seed");
    run->add_flag("--dry-run", dry_run, "print the vintage/job plan and exit");
    run->add_flag("--raw-kurtosis", raw_kurtosis, "report raw instead of excess kurtosis");

    auto* report = app.add_subcommand("report", "consolidate a completed run");
    report->add_option("--dir", report_dir, "artifacts directory")->required();

    auto* audit = app.add_subcommand("audit-lookahead", "verify no training-time lookahead");
    audit->add_option("--config", config_path, "run config JSON")->required();

    CLI11_PARSE(app, argc, argv);
    has_seed = seed_opt->count() > 0;

    try {
        if (clean->parsed()) return cmd_clean(input, out_dir, eval_universe);
        if (synth->parsed()) return cmd_synth(load_run_config(config_path), synth_out);
        if (run->parsed()) {
            RunConfig cfg = load_run_config(config_path);
            if (has_seed) cfg.seed = seed_override;
            return run_pipeline(cfg, dry_run, raw_kurtosis, std::cout).exit_code;
        }
        if (report->parsed()) {
            write_report(report_dir, std::cout);
            return 0;
        }
        if (audit->parsed())
            return audit_from_config(load_run_config(config_path), std::cout).pass ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
