#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tkat/tensor.hpp"

namespace tkat {

// Hourly multivariate series of traded notionals: one named column per
// asset, strictly contiguous hourly timestamps, all values finite and
// >= 0.
struct RawSeriesTable {
    std::vector<int64_t> epoch_hours;          // hours since 1970-01-01T00Z
    std::vector<std::string> columns;          // asset names
    std::vector<std::vector<double>> values;   // [column][row]
    int target_col = 0;

    int64_t rows() const { return static_cast<int64_t>(epoch_hours.size()); }
    int n_assets() const { return static_cast<int>(columns.size()); }
};

// CSV schema: header `timestamp,ASSET1,...` with ISO-8601 UTC hourly
// timestamps. `target` defaults to the first column.
RawSeriesTable read_series_csv(const std::string& path, const std::string& target = "");
void write_series_csv(const std::string& path, const RawSeriesTable& table);

int64_t parse_iso_hour(const std::string& ts);
std::string format_iso_hour(int64_t epoch_hour);
int hour_of_day(int64_t epoch_hour);
int day_of_week(int64_t epoch_hour);  // Monday = 0

// [n, 2]: hour-of-day / 23 and day-of-week / 6; both known a priori for
// any timestamp.
Tensor calendar_features(const std::vector<int64_t>& epoch_hours);

// Order statistic median; even windows average the two central values.
double window_median(const double* data, int64_t n);

struct MedianScaleResult {
    std::vector<double> scaled;   // same length as input; invalid entries are 0
    std::vector<uint8_t> valid;   // per row
    int64_t leading_dropped = 0;  // always window + shift
    int64_t zero_median_rows = 0;
};

// scaled_t = x_t / median(x_{t-shift-window+1} .. x_{t-shift}). The first
// window+shift rows are dropped and a zero median marks the row invalid.
MedianScaleResult moving_median_scale(const std::vector<double>& series, int window, int shift);

// Divides by the max over the training prefix [0, train_end); training
// values land in [0,1], later values may exceed 1 and are not clipped.
std::pair<std::vector<double>, double> minmax_fit_transform(const std::vector<double>& series,
                                                            int64_t train_end);

struct ScalerState {
    int median_window = 336;  // two weeks of hours
    int horizon_shift = 1;
    std::vector<double> train_max;  // per asset, > 0
};

// Fully scaled feature table: per-asset scaled columns followed by the
// two calendar columns; rows align 1:1 with the raw table.
struct ScaledTable {
    std::vector<int64_t> epoch_hours;
    int n_assets = 0;
    int target_col = 0;
    std::vector<std::vector<double>> features;  // n_assets + 2 columns
    std::vector<uint8_t> valid;

    int n_features() const { return n_assets + 2; }
    int64_t rows() const { return static_cast<int64_t>(epoch_hours.size()); }
};

// One supervised example: past window over every feature, known-future
// calendar block, scaled target vector. No element uses information later
// than its allowed position.
struct WindowSample {
    Tensor past;          // [P, n_assets+2]
    Tensor future_known;  // [horizon, 2]
    Tensor target;        // [horizon]
    int64_t anchor = 0;   // row index of the last past observation
};

std::vector<int64_t> window_anchors(const std::vector<uint8_t>& valid, int past_len, int horizon);
std::vector<WindowSample> make_windows(const ScaledTable& table, int past_len, int horizon);

struct SplitDataset {
    std::vector<WindowSample> train, val, test;
};

// Chronological 80/20 split into train-pool/test, then the last 20% of
// the pool becomes validation.
SplitDataset split_dataset(std::vector<WindowSample> samples);

struct PipelineConfig {
    int past_len = 30;
    int horizon = 1;
    int median_window = 336;
};

struct PipelineResult {
    ScaledTable scaled;
    ScalerState scaler;
    std::vector<WindowSample> samples;
    SplitDataset splits;
    int64_t zero_median_rows = 0;
};

PipelineResult build_dataset(const RawSeriesTable& raw, const PipelineConfig& cfg);

// Recomputes every element of the sample from raw rows no later than its
// allowed position (plus timestamps, which are known a priori) and
// compares bit-exactly.
bool audit_no_foresight(const RawSeriesTable& raw, const PipelineConfig& cfg,
                        const ScalerState& scaler, const WindowSample& sample);

// Binary cache of windowed samples, keyed by a content hash of the inputs.
uint64_t window_cache_key(uint64_t data_hash, int past_len, int horizon, int median_window);
void save_window_cache(const std::string& path, const std::vector<WindowSample>& samples);
std::vector<WindowSample> load_window_cache(const std::string& path);

}  // namespace tkat
