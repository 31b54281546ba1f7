#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tkat/data.hpp"
#include "tkat/model.hpp"

namespace tkat {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 128;
    int max_epochs = 100;
    int early_stop_patience = 6;
    int plateau_patience = 3;
    double plateau_factor = 0.5;
    uint64_t seed = 0;
    double time_budget_s = 0.0;  // 0 disables the wall-time guard
    bool verbose = false;

    void validate() const;
};

Tensor mse_loss(const Tensor& predicted, const Tensor& truth);
double r_squared(std::span<const double> predicted, std::span<const double> truth);

// Standard bias-corrected Adam; epsilon sits outside the corrected
// second-moment square root.
class Adam {
public:
    explicit Adam(const std::vector<Tensor*>& params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-7);
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              double lr);
    int64_t steps_taken() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

enum class CallbackAction { Continue, ReduceLr, StopRestoreBest };
std::string to_string(CallbackAction a);

// Validation-loss driven schedule: halve the learning rate after
// `plateau_patience` consecutive epochs without strict improvement, stop
// and restore the best weights after `early_stop_patience`; both
// counters reset on improvement.
class PlateauCallback {
public:
    PlateauCallback(int plateau_patience, int early_stop_patience);
    CallbackAction update(double val_loss);
    bool last_improved() const { return last_improved_; }
    double best() const { return best_; }

private:
    int plateau_patience_, stop_patience_;
    int plateau_stall_ = 0, stop_stall_ = 0;
    double best_;
    bool last_improved_ = false;
};

struct Batch {
    Tensor past;    // [b, P, n_features]
    Tensor future;  // [b, horizon, n_known]
    Tensor target;  // [b, horizon]
};

Batch assemble_batch(std::span<const WindowSample> samples, std::span<const int64_t> indices);

// Batched no-grad forward over all samples; row-major [n, horizon].
std::vector<double> predict_matrix(ForecastModel& model, std::span<const WindowSample> samples,
                                   int batch_size);
std::vector<double> target_matrix(std::span<const WindowSample> samples);

struct EpochRecord {
    int epoch;
    double train_loss;
    double val_loss;
    double lr;
    std::string action;
};

struct TestMetrics {
    double r2 = 0.0;       // mean of the per-step scores
    double r2_flat = 0.0;  // pooled over all (sample, step) pairs
    std::vector<double> r2_per_step;
    std::vector<double> rmse_per_step;
    int64_t n_params = 0;
    double wall_time_s = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    TestMetrics test;
    double best_val = 0.0;
    int best_epoch = 0;
    bool timed_out = false;
};

struct TrainTimeout : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Full protocol: seeded shuffling, mini-batch Adam on the MSE, validation
// after each epoch driving the plateau/early-stop callback, best-weights
// restore, final test evaluation.
TrainResult train_loop(ForecastModel& model, const SplitDataset& data, const TrainConfig& cfg);

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);
nlohmann::json metrics_to_json(const TestMetrics& m);

}  // namespace tkat
