#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsfb/evalproto.hpp"
#include "tsfb/portfolio.hpp"
#include "tsfb/synth.hpp"

namespace tsfb {

// where the return panel comes from: a binary cache, a raw CSV run through the
// cleaning pipeline, or a seeded synthetic signal panel
struct PanelSourceConfig {
    std::string kind = "synthetic";  // cache | csv | synthetic
    std::string path;
    int assets = 100;
    int years = 6;
    std::string pattern = "sine";  // sine | ar1 | step
    double noise_sd = 0.3;

    void validate() const;
};

struct SynthSectionConfig {
    int count = 8;
    int len = 512;

    void validate() const;
};

// versioned run document; unknown keys are rejected at every level
struct RunConfig {
    int schema_version = 1;
    uint64_t seed = 1;
    std::string out_dir = "out";
    PanelSourceConfig panel;
    SynthSectionConfig synth;
    ExperimentPlan plan;
    nlohmann::json chronos;  // model config json, null/absent skips the family
    nlohmann::json timesfm;
    std::string base_checkpoint;          // required by zero_shot, optional seed for fine_tune
    std::vector<std::string> benchmarks;  // subset of {linear,lasso,ridge,pcr,gbt,fnn}
    TrainSchedule schedule;
    std::vector<CostScenario> costs;

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::string& path);

ReturnPanel materialize_panel(const RunConfig& cfg);

// one pipeline job = one model family at one window, all vintages
struct JobSpec {
    std::string family;  // chronos | timesfm | benchmark name
    int window = 0;

    std::string job_id() const { return family + "_w" + std::to_string(window); }
};

std::vector<JobSpec> plan_jobs(const RunConfig& cfg);

// classical benchmark retrained per vintage on pooled lag windows
ForecastSet run_benchmark(const ReturnPanel& panel, const ExperimentPlan& plan,
                          const std::string& family, int window, uint64_t seed);

// TSFM family across all vintages under the plan's regime; fine_tune chains
// each vintage from the previous one's checkpoint; emitted checkpoints are
// appended to `checkpoints` as (vintage cutoff year, checkpoint)
ForecastSet run_tsfm(const ReturnPanel& panel, const RunConfig& cfg, const std::string& family,
                     int window, std::vector<std::pair<int, Checkpoint>>* checkpoints);

struct RunSummary {
    nlohmann::json manifest;
    bool all_complete = false;
    std::string bundle_hash;  // over all artifacts except the MANIFEST itself
    int exit_code = 1;
};

// clean -> (synthetic) panel -> train -> forecast -> evaluate -> portfolio ->
// report artifacts under cfg.out_dir, plus MANIFEST.json; dry_run only prints
// the vintage/job plan and touches nothing
RunSummary run_pipeline(const RunConfig& cfg, bool dry_run, bool raw_kurtosis, std::ostream& log);

// 64-bit FNV-1a over artifact bytes, folded in sorted-path order
uint64_t fnv1a(const void* data, size_t len, uint64_t h = 1469598103934665603ULL);
std::string bundle_hash(const std::string& dir, const std::vector<std::string>& rel_paths);

nlohmann::json load_manifest(const std::string& dir);  // throws when missing

// ln(1+r) partial sums
std::vector<double> cum_log_returns(const std::vector<double>& daily);

// consolidates a completed run: merged metrics and per-job cumulative
// log-return series CSVs for external plotting
void write_report(const std::string& artifacts_dir, std::ostream& log);

// re-runs the first TSFM job with every post-cutoff panel cell perturbed and
// checks that checkpoints and pre-cutoff forecasts are bit-identical
AuditResult audit_from_config(const RunConfig& cfg, std::ostream& log);

}  // namespace tsfb
