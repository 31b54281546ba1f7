#include "tkat/cli.hpp"

#include <cstdio>
#include <cstdlib>

#include "CLI11.hpp"

#include "tkat/bench.hpp"
#include "tkat/gradcheck.hpp"
#include "tkat/synth.hpp"

namespace tkat {

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir, int jobs) {
    if (const char* env = std::getenv("BENCH_THREADS")) {
        jobs = std::max(1, std::atoi(env));
    }
    BenchConfig config = BenchConfig::from_ini_file(config_path);
    std::printf("running %zu models x %zu horizons x %zu seeds (jobs=%d)\n",
                config.models.size(), config.horizons.size(), config.seeds.size(), jobs);
    BenchmarkReport report = run_benchmark(config, jobs);
    emit_results(report, out_dir);
    std::printf("wrote results to %s\n", out_dir.c_str());
    int failed = 0;
    for (const CellResult& r : report.rows) failed += r.ok ? 0 : 1;
    if (failed > 0) std::printf("%d cell(s) failed; see results.csv\n", failed);
    return 0;
}

int cmd_synth(const std::string& out, int64_t hours, int assets, uint64_t seed) {
    RawSeriesTable table = synth_series(hours, assets, seed);
    write_series_csv(out, table);
    std::printf("wrote %lld hours x %d assets to %s\n", static_cast<long long>(hours), assets,
                out.c_str());
    return 0;
}

int cmd_params(const std::string& model_name, int horizon, int observed, int known, int past_len,
               int d_model, int units, int heads, int kan_grid, int kan_order) {
    ModelSpec spec;
    spec.n_observed = observed;
    spec.n_known = known;
    spec.past_len = past_len;
    spec.horizon = horizon;
    spec.d_model = d_model;
    spec.units = units;
    spec.heads = heads;
    spec.kan.grid_size = kan_grid;
    spec.kan.order = kan_order;
    spec.seed = 0;
    std::unique_ptr<ForecastModel> model = build_model(model_name, spec);
    std::map<std::string, int64_t> breakdown;
    const int64_t total = count_parameters(*model, &breakdown);
    std::printf("%s (horizon %d): %lld trainable parameters\n", model_name.c_str(), horizon,
                static_cast<long long>(total));
    for (const auto& [group, count] : breakdown) {
        std::printf("  %-16s %10lld  (%.1f%%)\n", group.c_str(), static_cast<long long>(count),
                    100.0 * static_cast<double>(count) / static_cast<double>(total));
    }
    return 0;
}

int cmd_gradcheck(double eps) {
    const auto results = run_gradient_suite(eps);
    bool all_pass = true;
    for (const GradCheckResult& r : results) {
        std::printf("%-18s max rel err %.3e  (tol %.0e)  %s\n", r.name.c_str(), r.max_rel_err,
                    r.tolerance, r.pass ? "ok" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int bench_cli_main(const std::vector<std::string>& args) {
    CLI::App app{"TKAT forecasting benchmark harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int jobs = 1;
    CLI::App* run = app.add_subcommand("run", "run a benchmark from a config file");
    run->add_option("--config", config_path, "benchmark config (ini)")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--jobs", jobs, "parallel cells (BENCH_THREADS overrides)");

    std::string synth_out = "data.csv";
    int64_t hours = 4000;
    int assets = 5;
    uint64_t seed = 7;
    CLI::App* synth = app.add_subcommand("synth", "write a synthetic hourly series CSV");
    synth->add_option("--out", synth_out, "output csv path");
    synth->add_option("--hours", hours, "number of hourly rows");
    synth->add_option("--assets", assets, "number of asset columns");
    synth->add_option("--seed", seed, "generator seed");

    std::string model_name;
    int horizon = 1, observed = 19, known = 2, past_len = 30;
    int d_model = 100, units = 100, heads = 4, kan_grid = 5, kan_order = 3;
    CLI::App* params = app.add_subcommand("params", "print a model's parameter count");
    params->add_option("--model", model_name, "model name")->required();
    params->add_option("--horizon", horizon, "forecast horizon");
    params->add_option("--observed", observed, "observed feature count");
    params->add_option("--known", known, "known feature count");
    params->add_option("--past", past_len, "lookback window");
    params->add_option("--d-model", d_model, "hidden width");
    params->add_option("--units", units, "recurrent baseline units");
    params->add_option("--heads", heads, "attention heads");
    params->add_option("--kan-grid", kan_grid, "spline grid size");
    params->add_option("--kan-order", kan_order, "spline order");

    double eps = 1e-6;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--eps", eps, "central difference step");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir, jobs);
        if (synth->parsed()) return cmd_synth(synth_out, hours, assets, seed);
        if (params->parsed()) {
            return cmd_params(model_name, horizon, observed, known, past_len, d_model, units,
                              heads, kan_grid, kan_order);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(eps);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace tkat
