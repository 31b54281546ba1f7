#include "tkat/bench.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "tkat/ini.hpp"
#include "tkat/synth.hpp"

namespace tkat {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_known_keys(const IniFile& ini) {
    static const std::map<std::string, std::set<std::string>> allowed = {
        {"data",
         {"source", "file", "hours", "assets", "synth_seed", "target", "past_len",
          "median_window", "cache", "cache_dir"}},
        {"models",
         {"names", "d_model", "heads", "units", "mlp_hidden", "kan_grid", "kan_order",
          "rkan_sublayers"}},
        {"training",
         {"learning_rate", "batch_size", "max_epochs", "early_stop_patience", "plateau_patience",
          "plateau_factor"}},
        {"horizons", {"values"}},
        {"seeds", {"values"}},
        {"report", {"export_inspection", "cell_timeout_s"}},
    };
    for (const auto& [section, keys] : ini.sections()) {
        auto it = allowed.find(section);
        if (it == allowed.end()) {
            throw std::invalid_argument("config: unknown section [" + section + "]");
        }
        for (const auto& [key, value] : keys) {
            if (!it->second.count(key)) {
                throw std::invalid_argument("config: unknown key '" + key + "' in [" + section +
                                            "]");
            }
        }
    }
}

}  // namespace

BenchConfig BenchConfig::from_ini_file(const std::string& path) {
    BenchConfig cfg = from_ini_text(read_file(path));
    return cfg;
}

BenchConfig BenchConfig::from_ini_text(const std::string& text) {
    const IniFile ini = IniFile::parse_text(text);
    check_known_keys(ini);
    BenchConfig cfg;
    cfg.config_hash = fnv1a(text);

    cfg.source = ini.get("data", "source", cfg.source);
    cfg.file = ini.get("data", "file", cfg.file);
    cfg.hours = ini.get_int("data", "hours", cfg.hours);
    cfg.assets = static_cast<int>(ini.get_int("data", "assets", cfg.assets));
    cfg.synth_seed = static_cast<uint64_t>(ini.get_int("data", "synth_seed",
                                                       static_cast<int64_t>(cfg.synth_seed)));
    cfg.target = ini.get("data", "target", cfg.target);
    cfg.past_len = static_cast<int>(ini.get_int("data", "past_len", cfg.past_len));
    cfg.median_window = static_cast<int>(ini.get_int("data", "median_window", cfg.median_window));
    cfg.cache = ini.get_bool("data", "cache", cfg.cache);
    cfg.cache_dir = ini.get("data", "cache_dir", cfg.cache_dir);

    cfg.models = ini.get_list("models", "names");
    cfg.d_model = static_cast<int>(ini.get_int("models", "d_model", cfg.d_model));
    cfg.heads = static_cast<int>(ini.get_int("models", "heads", cfg.heads));
    cfg.units = static_cast<int>(ini.get_int("models", "units", cfg.units));
    cfg.mlp_hidden = static_cast<int>(ini.get_int("models", "mlp_hidden", cfg.mlp_hidden));
    cfg.kan_grid = static_cast<int>(ini.get_int("models", "kan_grid", cfg.kan_grid));
    cfg.kan_order = static_cast<int>(ini.get_int("models", "kan_order", cfg.kan_order));
    cfg.rkan_sublayers =
        static_cast<int>(ini.get_int("models", "rkan_sublayers", cfg.rkan_sublayers));

    cfg.train.learning_rate = ini.get_double("training", "learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size =
        static_cast<int>(ini.get_int("training", "batch_size", cfg.train.batch_size));
    cfg.train.max_epochs =
        static_cast<int>(ini.get_int("training", "max_epochs", cfg.train.max_epochs));
    cfg.train.early_stop_patience = static_cast<int>(
        ini.get_int("training", "early_stop_patience", cfg.train.early_stop_patience));
    cfg.train.plateau_patience = static_cast<int>(
        ini.get_int("training", "plateau_patience", cfg.train.plateau_patience));
    cfg.train.plateau_factor =
        ini.get_double("training", "plateau_factor", cfg.train.plateau_factor);

    for (const std::string& h : ini.get_list("horizons", "values")) {
        cfg.horizons.push_back(std::stoi(h));
    }
    for (const std::string& s : ini.get_list("seeds", "values")) {
        cfg.seeds.push_back(static_cast<uint64_t>(std::stoull(s)));
    }

    cfg.export_inspection = ini.get_bool("report", "export_inspection", cfg.export_inspection);
    cfg.cell_timeout_s = ini.get_double("report", "cell_timeout_s", cfg.cell_timeout_s);

    cfg.validate();
    return cfg;
}

void BenchConfig::validate() const {
    if (models.empty()) throw std::invalid_argument("config: empty model list");
    for (const std::string& m : models) {
        if (!is_known_model(m)) throw std::invalid_argument("config: unknown model name '" + m + "'");
    }
    if (horizons.empty()) throw std::invalid_argument("config: no horizons configured");
    for (int h : horizons) {
        if (h < 1) throw std::invalid_argument("config: horizons must be >= 1");
    }
    if (seeds.empty()) throw std::invalid_argument("config: no seeds configured");
    if (source != "synthetic" && source != "csv") {
        throw std::invalid_argument("config: source must be 'synthetic' or 'csv'");
    }
    if (source == "csv" && file.empty()) {
        throw std::invalid_argument("config: csv source needs a file");
    }
    train.validate();
}

nlohmann::json BenchConfig::to_json() const {
    return nlohmann::json{
        {"data",
         {{"source", source},
          {"file", file},
          {"hours", hours},
          {"assets", assets},
          {"synth_seed", synth_seed},
          {"target", target},
          {"past_len", past_len},
          {"median_window", median_window}}},
        {"models",
         {{"names", models},
          {"d_model", d_model},
          {"heads", heads},
          {"units", units},
          {"mlp_hidden", mlp_hidden},
          {"kan_grid", kan_grid},
          {"kan_order", kan_order},
          {"rkan_sublayers", rkan_sublayers}}},
        {"training",
         {{"learning_rate", train.learning_rate},
          {"batch_size", train.batch_size},
          {"max_epochs", train.max_epochs},
          {"early_stop_patience", train.early_stop_patience},
          {"plateau_patience", train.plateau_patience},
          {"plateau_factor", train.plateau_factor}}},
        {"horizons", horizons},
        {"seeds", seeds}};
}

ModelSpec model_spec_for(const BenchConfig& config, int n_observed, int n_known, int horizon,
                         uint64_t seed) {
    ModelSpec spec;
    spec.n_observed = n_observed;
    spec.n_known = n_known;
    spec.past_len = config.past_len;
    spec.horizon = horizon;
    spec.d_model = config.d_model;
    spec.heads = config.heads;
    spec.units = config.units;
    spec.mlp_hidden = config.mlp_hidden;
    spec.kan.grid_size = config.kan_grid;
    spec.kan.order = config.kan_order;
    spec.rkan_sublayers = config.rkan_sublayers;
    spec.seed = seed;
    return spec;
}

uint64_t cell_seed(uint64_t run_seed, const std::string& model, int horizon) {
    return mix_seed(run_seed, fnv1a(model) ^ static_cast<uint64_t>(horizon));
}

std::vector<Aggregate> BenchmarkReport::aggregates() const {
    std::vector<Aggregate> out;
    for (const std::string& model : config.models) {
        for (int horizon : config.horizons) {
            Aggregate agg;
            agg.model = model;
            agg.horizon = horizon;
            std::vector<double> vals;
            for (const CellResult& r : rows) {
                if (r.model == model && r.horizon == horizon && r.ok) vals.push_back(r.r2);
            }
            agg.n = static_cast<int>(vals.size());
            if (!vals.empty()) {
                double m = 0.0;
                for (double v : vals) m += v;
                m /= static_cast<double>(vals.size());
                double var = 0.0;
                for (double v : vals) var += (v - m) * (v - m);
                var /= static_cast<double>(vals.size());  // population std over the seeds
                agg.r2_mean = m;
                agg.r2_std = std::sqrt(var);
            }
            out.push_back(agg);
        }
    }
    return out;
}

namespace {

struct PreparedData {
    int horizon;
    SplitDataset splits;
    PipelineConfig pipeline;
    ScalerState scaler;
};

RawSeriesTable load_raw(const BenchConfig& config) {
    if (config.source == "synthetic") {
        return synth_series(config.hours, config.assets, config.synth_seed);
    }
    return read_series_csv(config.file, config.target);
}

}  // namespace

BenchmarkReport run_benchmark(const BenchConfig& config, int jobs) {
    config.validate();
    BenchmarkReport report;
    report.config = config;

    const RawSeriesTable raw = load_raw(config);
    const int n_observed = raw.n_assets();
    const int n_known = 2;

    // one pipeline per horizon, shared read-only across cells
    std::map<int, PreparedData> data;
    for (int horizon : config.horizons) {
        if (data.count(horizon)) continue;
        PreparedData d;
        d.horizon = horizon;
        d.pipeline = PipelineConfig{config.past_len, horizon, config.median_window};
        PipelineResult pr = build_dataset(raw, d.pipeline);
        d.splits = std::move(pr.splits);
        d.scaler = std::move(pr.scaler);
        data.emplace(horizon, std::move(d));
    }

    struct CellTask {
        std::string model;
        int horizon;
        uint64_t seed;
    };
    std::vector<CellTask> tasks;
    for (const std::string& model : config.models) {
        for (int horizon : config.horizons) {
            for (uint64_t seed : config.seeds) tasks.push_back({model, horizon, seed});
        }
    }
    report.rows.resize(tasks.size());

    std::atomic<size_t> next{0};
    std::atomic<int> done{0};
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const CellTask& task = tasks[i];
            CellResult& cell = report.rows[i];
            cell.model = task.model;
            cell.horizon = task.horizon;
            cell.seed = task.seed;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const PreparedData& d = data.at(task.horizon);
                ModelSpec spec = model_spec_for(config, n_observed, n_known, task.horizon,
                                                cell_seed(task.seed, task.model, task.horizon));
                std::unique_ptr<ForecastModel> model = build_model(task.model, spec);
                TrainConfig tc = config.train;
                tc.seed = cell_seed(task.seed, task.model + "/shuffle", task.horizon);
                tc.time_budget_s = config.cell_timeout_s;
                TrainResult r = train_loop(*model, d.splits, tc);
                cell.ok = true;
                cell.r2 = r.test.r2;
                cell.rmse_per_step = r.test.rmse_per_step;
                cell.n_params = r.test.n_params;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
            cell.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const int k = done.fetch_add(1) + 1;
            std::printf("[%3d/%3zu] %-12s h=%-2d seed=%llu  %s%s  (%.1fs)\n", k, tasks.size(),
                        task.model.c_str(), task.horizon,
                        static_cast<unsigned long long>(task.seed),
                        cell.ok ? "r2=" : "FAILED: ",
                        cell.ok ? std::to_string(cell.r2).c_str() : cell.error.c_str(),
                        cell.wall_time_s);
            std::fflush(stdout);
        }
    };

    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    // parameter counts per (model, horizon); cheap to rebuild, seed 0
    for (const std::string& model : config.models) {
        for (int horizon : config.horizons) {
            try {
                ModelSpec spec = model_spec_for(config, n_observed, n_known, horizon, 0);
                std::unique_ptr<ForecastModel> m = build_model(model, spec);
                report.param_counts[{model, horizon}] = count_parameters(*m);
            } catch (const std::exception&) {
                report.param_counts[{model, horizon}] = 0;  // unbuildable cell
            }
        }
    }
    return report;
}

namespace {

std::string fmt(double v, const char* spec = "%.10g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string sanitize(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    return s;
}

}  // namespace

void emit_results(const BenchmarkReport& report, const std::string& out_dir) {
    report.config.validate();
    if (report.rows.empty()) throw std::invalid_argument("emit_results: report has no rows");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    {
        std::ofstream out(dir / "results.csv", std::ios::trunc);
        out << "model,horizon,seed,status,r2,n_params,wall_time_s,error\n";
        for (const CellResult& r : report.rows) {
            out << r.model << ',' << r.horizon << ',' << r.seed << ','
                << (r.ok ? "ok" : "failed") << ',' << (r.ok ? fmt(r.r2) : "") << ','
                << r.n_params << ',' << fmt(r.wall_time_s, "%.3f") << ',' << sanitize(r.error)
                << '\n';
        }
    }
    {
        std::ofstream out(dir / "summary.csv", std::ios::trunc);
        out << "horizon";
        for (const std::string& m : report.config.models) {
            out << ',' << m << "_mean," << m << "_std";
        }
        out << '\n';
        const std::vector<Aggregate> aggs = report.aggregates();
        for (int horizon : report.config.horizons) {
            out << horizon;
            for (const std::string& model : report.config.models) {
                const Aggregate* found = nullptr;
                for (const Aggregate& a : aggs) {
                    if (a.model == model && a.horizon == horizon) {
                        found = &a;
                        break;
                    }
                }
                if (found && found->n > 0) {
                    out << ',' << fmt(found->r2_mean, "%.6f") << ',' << fmt(found->r2_std, "%.6f");
                } else {
                    out << ",NA,NA";
                }
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "params.csv", std::ios::trunc);
        out << "horizon";
        for (const std::string& m : report.config.models) out << ',' << m;
        out << '\n';
        for (int horizon : report.config.horizons) {
            out << horizon;
            for (const std::string& model : report.config.models) {
                auto it = report.param_counts.find({model, horizon});
                out << ',' << (it == report.param_counts.end() ? 0 : it->second);
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "rmse_by_step.csv", std::ios::trunc);
        out << "model,horizon,seed,step,rmse\n";
        for (const CellResult& r : report.rows) {
            if (!r.ok) continue;
            for (size_t k = 0; k < r.rmse_per_step.size(); ++k) {
                out << r.model << ',' << r.horizon << ',' << r.seed << ',' << (k + 1) << ','
                    << fmt(r.rmse_per_step[k]) << '\n';
            }
        }
    }
    {
        nlohmann::json manifest;
        manifest["config"] = report.config.to_json();
        char hash_hex[32];
        std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                      static_cast<unsigned long long>(report.config.config_hash));
        manifest["config_hash"] = hash_hex;
        manifest["artifact"] = "tkat";
        manifest["version"] = "0.1.0";
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        out << manifest.dump(2) << '\n';
    }
}

}  // namespace tkat
