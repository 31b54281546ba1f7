#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "tkat/baselines.hpp"
#include "tkat/data.hpp"
#include "tkat/training.hpp"

namespace tkat {

// Parsed benchmark configuration; sections [data], [models], [training],
// [horizons], [seeds], [report].
struct BenchConfig {
    // [data]
    std::string source = "synthetic";  // or "csv"
    std::string file;
    int64_t hours = 4000;
    int assets = 5;
    uint64_t synth_seed = 7;
    std::string target;
    int past_len = 30;
    int median_window = 336;
    bool cache = false;
    std::string cache_dir = ".";

    // [models]
    std::vector<std::string> models;
    int d_model = 100;
    int heads = 4;
    int units = 100;
    int mlp_hidden = 100;
    int kan_grid = 5;
    int kan_order = 3;
    int rkan_sublayers = 1;

    // [training]
    TrainConfig train;

    std::vector<int> horizons;
    std::vector<uint64_t> seeds;

    // [report]
    bool export_inspection = false;
    double cell_timeout_s = 0.0;

    static BenchConfig from_ini_file(const std::string& path);
    static BenchConfig from_ini_text(const std::string& text);
    void validate() const;
    nlohmann::json to_json() const;
    uint64_t config_hash = 0;  // hash of the source text when file-loaded
};

struct CellResult {
    std::string model;
    int horizon = 0;
    uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double r2 = 0.0;
    std::vector<double> rmse_per_step;
    int64_t n_params = 0;
    double wall_time_s = 0.0;
};

struct Aggregate {
    std::string model;
    int horizon = 0;
    int n = 0;  // successful seeds
    double r2_mean = 0.0;
    double r2_std = 0.0;  // population formula over the seeds
};

struct BenchmarkReport {
    BenchConfig config;
    std::vector<CellResult> rows;  // deterministic model x horizon x seed order
    std::map<std::pair<std::string, int>, int64_t> param_counts;

    std::vector<Aggregate> aggregates() const;  // pure function of rows
};

// Runs every (model, horizon, seed) cell; a failing cell is recorded and
// does not abort the rest. jobs > 1 runs cells on a worker pool; results
// are deterministic regardless of job count.
BenchmarkReport run_benchmark(const BenchConfig& config, int jobs = 1);

// Writes results.csv, summary.csv, params.csv, rmse_by_step.csv and
// manifest.json. summary.csv is a pure function of config+seeds and is
// byte-identical across reruns.
void emit_results(const BenchmarkReport& report, const std::string& out_dir);

ModelSpec model_spec_for(const BenchConfig& config, int n_observed, int n_known, int horizon,
                         uint64_t seed);
uint64_t cell_seed(uint64_t run_seed, const std::string& model, int horizon);

}  // namespace tkat
