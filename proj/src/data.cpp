#include "tkat/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tkat {

namespace {

int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097LL + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t yy = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y = static_cast<int>(yy + (m <= 2));
}

}  // namespace

int64_t parse_iso_hour(const std::string& ts) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    if (std::sscanf(ts.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s) < 4) {
        throw std::invalid_argument("bad timestamp '" + ts + "', expected ISO-8601 UTC");
    }
    if (mi != 0 || s != 0) {
        throw std::invalid_argument("timestamp '" + ts + "' is not on an hour boundary");
    }
    return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 24 + h;
}

std::string format_iso_hour(int64_t epoch_hour) {
    const int64_t days = epoch_hour >= 0 ? epoch_hour / 24 : (epoch_hour - 23) / 24;
    const int hour = static_cast<int>(epoch_hour - days * 24);
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:00:00Z", y, m, d, hour);
    return buf;
}

int hour_of_day(int64_t epoch_hour) { return static_cast<int>(((epoch_hour % 24) + 24) % 24); }

int day_of_week(int64_t epoch_hour) {
    const int64_t days = epoch_hour >= 0 ? epoch_hour / 24 : (epoch_hour - 23) / 24;
    return static_cast<int>(((days % 7) + 7 + 3) % 7);  // 1970-01-01 was a Thursday
}

Tensor calendar_features(const std::vector<int64_t>& epoch_hours) {
    const int64_t n = static_cast<int64_t>(epoch_hours.size());
    std::vector<double> out(static_cast<size_t>(n * 2));
    for (int64_t i = 0; i < n; ++i) {
        out[static_cast<size_t>(2 * i)] = hour_of_day(epoch_hours[static_cast<size_t>(i)]) / 23.0;
        out[static_cast<size_t>(2 * i + 1)] =
            day_of_week(epoch_hours[static_cast<size_t>(i)]) / 6.0;
    }
    return Tensor::from_vector({n, 2}, std::move(out));
}

RawSeriesTable read_series_csv(const std::string& path, const std::string& target) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open series file " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty series file " + path);

    RawSeriesTable table;
    {
        std::stringstream header(line);
        std::string cell;
        bool first = true;
        while (std::getline(header, cell, ',')) {
            if (first) {
                if (cell != "timestamp") {
                    throw std::runtime_error("series header must start with 'timestamp', got '" +
                                             cell + "'");
                }
                first = false;
            } else {
                table.columns.push_back(cell);
            }
        }
    }
    if (table.columns.empty()) throw std::runtime_error("series file has no asset columns");
    table.values.assign(table.columns.size(), {});

    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ',')) continue;
        const int64_t eh = parse_iso_hour(cell);
        if (!table.epoch_hours.empty() && eh != table.epoch_hours.back() + 1) {
            throw std::runtime_error("missing or unordered timestamp at line " +
                                     std::to_string(line_no) + " (" + cell + ")");
        }
        table.epoch_hours.push_back(eh);
        for (size_t c = 0; c < table.columns.size(); ++c) {
            if (!std::getline(row, cell, ',')) {
                throw std::runtime_error("short row at line " + std::to_string(line_no));
            }
            const double v = std::stod(cell);
            if (!std::isfinite(v) || v < 0.0) {
                throw std::runtime_error("notional values must be finite and >= 0, line " +
                                         std::to_string(line_no));
            }
            table.values[c].push_back(v);
        }
    }
    if (table.rows() == 0) throw std::runtime_error("series file has no rows");

    if (!target.empty()) {
        auto it = std::find(table.columns.begin(), table.columns.end(), target);
        if (it == table.columns.end()) {
            throw std::runtime_error("target column '" + target + "' not present");
        }
        table.target_col = static_cast<int>(it - table.columns.begin());
    }
    return table;
}

void write_series_csv(const std::string& path, const RawSeriesTable& table) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "timestamp";
    for (const auto& c : table.columns) out << ',' << c;
    out << '\n';
    char buf[32];
    for (int64_t r = 0; r < table.rows(); ++r) {
        out << format_iso_hour(table.epoch_hours[static_cast<size_t>(r)]);
        for (size_t c = 0; c < table.columns.size(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", table.values[c][static_cast<size_t>(r)]);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

double window_median(const double* data, int64_t n) {
    static thread_local std::vector<double> scratch;
    scratch.assign(data, data + n);
    const int64_t mid = n / 2;
    std::nth_element(scratch.begin(), scratch.begin() + mid, scratch.end());
    const double hi = scratch[static_cast<size_t>(mid)];
    if (n % 2 == 1) return hi;
    const double lo = *std::max_element(scratch.begin(), scratch.begin() + mid);
    return 0.5 * (lo + hi);
}

MedianScaleResult moving_median_scale(const std::vector<double>& series, int window, int shift) {
    const int64_t n = static_cast<int64_t>(series.size());
    if (window < 1 || shift < 0) {
        throw std::invalid_argument("moving_median_scale: window must be >= 1 and shift >= 0");
    }
    if (n <= window + shift) {
        throw std::invalid_argument("moving_median_scale: series length " + std::to_string(n) +
                                    " too short for window " + std::to_string(window) +
                                    " + shift " + std::to_string(shift));
    }
    MedianScaleResult res;
    res.scaled.assign(static_cast<size_t>(n), 0.0);
    res.valid.assign(static_cast<size_t>(n), 0);
    res.leading_dropped = window + shift;
    for (int64_t t = window + shift; t < n; ++t) {
        const int64_t start = t - shift - window + 1;
        const double med = window_median(series.data() + start, window);
        if (med <= 0.0) {
            ++res.zero_median_rows;
            continue;
        }
        res.scaled[static_cast<size_t>(t)] = series[static_cast<size_t>(t)] / med;
        res.valid[static_cast<size_t>(t)] = 1;
    }
    return res;
}

std::pair<std::vector<double>, double> minmax_fit_transform(const std::vector<double>& series,
                                                            int64_t train_end) {
    if (train_end < 1 || train_end > static_cast<int64_t>(series.size())) {
        throw std::invalid_argument("minmax_fit_transform: bad training range");
    }
    double mx = 0.0;
    for (int64_t i = 0; i < train_end; ++i) mx = std::max(mx, series[static_cast<size_t>(i)]);
    if (mx <= 0.0) {
        throw std::runtime_error("minmax_fit_transform: training maximum must be positive");
    }
    std::vector<double> out(series.size());
    for (size_t i = 0; i < series.size(); ++i) out[i] = series[i] / mx;
    return {std::move(out), mx};
}

std::vector<int64_t> window_anchors(const std::vector<uint8_t>& valid, int past_len, int horizon) {
    const int64_t n = static_cast<int64_t>(valid.size());
    std::vector<int64_t> anchors;
    // run length of valid rows ending at r lets each anchor check be O(1)
    int64_t run = 0;
    std::vector<int64_t> run_at(static_cast<size_t>(n), 0);
    for (int64_t r = 0; r < n; ++r) {
        run = valid[static_cast<size_t>(r)] ? run + 1 : 0;
        run_at[static_cast<size_t>(r)] = run;
    }
    for (int64_t t = past_len - 1; t + horizon < n; ++t) {
        if (run_at[static_cast<size_t>(t + horizon)] >= past_len + horizon) anchors.push_back(t);
    }
    return anchors;
}

namespace {

WindowSample materialize_sample(const ScaledTable& table, int64_t anchor, int past_len,
                                int horizon) {
    const int nf = table.n_features();
    std::vector<double> past(static_cast<size_t>(past_len * nf));
    for (int64_t i = 0; i < past_len; ++i) {
        const int64_t r = anchor - past_len + 1 + i;
        for (int c = 0; c < nf; ++c) {
            past[static_cast<size_t>(i * nf + c)] =
                table.features[static_cast<size_t>(c)][static_cast<size_t>(r)];
        }
    }
    std::vector<double> fut(static_cast<size_t>(horizon * 2));
    std::vector<double> target(static_cast<size_t>(horizon));
    for (int64_t k = 0; k < horizon; ++k) {
        const int64_t r = anchor + 1 + k;
        fut[static_cast<size_t>(2 * k)] =
            table.features[static_cast<size_t>(table.n_assets)][static_cast<size_t>(r)];
        fut[static_cast<size_t>(2 * k + 1)] =
            table.features[static_cast<size_t>(table.n_assets + 1)][static_cast<size_t>(r)];
        target[static_cast<size_t>(k)] =
            table.features[static_cast<size_t>(table.target_col)][static_cast<size_t>(r)];
    }
    WindowSample s;
    s.past = Tensor::from_vector({past_len, nf}, std::move(past));
    s.future_known = Tensor::from_vector({horizon, 2}, std::move(fut));
    s.target = Tensor::from_vector({horizon}, std::move(target));
    s.anchor = anchor;
    return s;
}

}  // namespace

std::vector<WindowSample> make_windows(const ScaledTable& table, int past_len, int horizon) {
    if (past_len < 1 || horizon < 1) {
        throw std::invalid_argument("make_windows: past_len and horizon must be >= 1");
    }
    const std::vector<int64_t> anchors = window_anchors(table.valid, past_len, horizon);
    if (anchors.empty()) {
        throw std::invalid_argument("make_windows: not enough usable rows for past_len " +
                                    std::to_string(past_len) + " and horizon " +
                                    std::to_string(horizon));
    }
    std::vector<WindowSample> samples;
    samples.reserve(anchors.size());
    for (int64_t a : anchors) samples.push_back(materialize_sample(table, a, past_len, horizon));
    return samples;
}

SplitDataset split_dataset(std::vector<WindowSample> samples) {
    const int64_t n = static_cast<int64_t>(samples.size());
    if (n < 10) {
        throw std::invalid_argument("split_dataset: needs at least 10 samples, got " +
                                    std::to_string(n));
    }
    const int64_t pool = static_cast<int64_t>(std::floor(0.8 * static_cast<double>(n)));
    const int64_t train = static_cast<int64_t>(std::floor(0.8 * static_cast<double>(pool)));
    SplitDataset out;
    out.train.assign(samples.begin(), samples.begin() + train);
    out.val.assign(samples.begin() + train, samples.begin() + pool);
    out.test.assign(samples.begin() + pool, samples.end());
    return out;
}

PipelineResult build_dataset(const RawSeriesTable& raw, const PipelineConfig& cfg) {
    PipelineResult res;
    res.scaler.median_window = cfg.median_window;
    res.scaler.horizon_shift = cfg.horizon;

    const int64_t n = raw.rows();
    const int na = raw.n_assets();
    std::vector<std::vector<double>> med_scaled(static_cast<size_t>(na));
    std::vector<uint8_t> valid(static_cast<size_t>(n), 1);
    for (int a = 0; a < na; ++a) {
        MedianScaleResult m =
            moving_median_scale(raw.values[static_cast<size_t>(a)], cfg.median_window, cfg.horizon);
        med_scaled[static_cast<size_t>(a)] = std::move(m.scaled);
        res.zero_median_rows += m.zero_median_rows;
        for (int64_t r = 0; r < n; ++r) {
            valid[static_cast<size_t>(r)] =
                valid[static_cast<size_t>(r)] && m.valid[static_cast<size_t>(r)];
        }
    }

    // the train-pool boundary decides which rows the min-max fit may see
    const std::vector<int64_t> anchors = window_anchors(valid, cfg.past_len, cfg.horizon);
    if (static_cast<int64_t>(anchors.size()) < 10) {
        throw std::invalid_argument("build_dataset: fewer than 10 usable samples");
    }
    const int64_t pool =
        static_cast<int64_t>(std::floor(0.8 * static_cast<double>(anchors.size())));
    const int64_t fit_end = anchors[static_cast<size_t>(pool - 1)] + cfg.horizon + 1;

    res.scaler.train_max.resize(static_cast<size_t>(na));
    for (int a = 0; a < na; ++a) {
        double mx = 0.0;
        for (int64_t r = 0; r < fit_end; ++r) {
            if (valid[static_cast<size_t>(r)]) {
                mx = std::max(mx, med_scaled[static_cast<size_t>(a)][static_cast<size_t>(r)]);
            }
        }
        if (mx <= 0.0) {
            throw std::runtime_error("build_dataset: non-positive training max for asset " +
                                     raw.columns[static_cast<size_t>(a)]);
        }
        res.scaler.train_max[static_cast<size_t>(a)] = mx;
        for (int64_t r = 0; r < n; ++r) {
            med_scaled[static_cast<size_t>(a)][static_cast<size_t>(r)] /= mx;
        }
    }

    res.scaled.epoch_hours = raw.epoch_hours;
    res.scaled.n_assets = na;
    res.scaled.target_col = raw.target_col;
    res.scaled.valid = std::move(valid);
    res.scaled.features = std::move(med_scaled);
    res.scaled.features.resize(static_cast<size_t>(na + 2));
    Tensor cal = calendar_features(raw.epoch_hours);
    std::vector<double>& hour_col = res.scaled.features[static_cast<size_t>(na)];
    std::vector<double>& dow_col = res.scaled.features[static_cast<size_t>(na + 1)];
    hour_col.resize(static_cast<size_t>(n));
    dow_col.resize(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r) {
        hour_col[static_cast<size_t>(r)] = cal.at({r, 0});
        dow_col[static_cast<size_t>(r)] = cal.at({r, 1});
    }

    res.samples = make_windows(res.scaled, cfg.past_len, cfg.horizon);
    res.splits = split_dataset(res.samples);
    return res;
}

bool audit_no_foresight(const RawSeriesTable& raw, const PipelineConfig& cfg,
                        const ScalerState& scaler, const WindowSample& sample) {
    const int64_t anchor = sample.anchor;
    const int na = raw.n_assets();
    const int w = scaler.median_window;
    const int shift = scaler.horizon_shift;
    const int p = static_cast<int>(sample.past.dim(0));
    const int horizon = static_cast<int>(sample.target.dim(0));
    if (shift != cfg.horizon) return false;

    auto scaled_at = [&](int asset, int64_t r, int64_t max_row) -> double {
        // reproduce the pipeline value using only raw rows <= max_row for
        // the denominator window
        const int64_t start = r - shift - w + 1;
        if (start < 0 || r - shift > max_row) {
            throw std::logic_error("audit: denominator window reaches a forbidden row");
        }
        const double med = window_median(raw.values[static_cast<size_t>(asset)].data() + start, w);
        double v = raw.values[static_cast<size_t>(asset)][static_cast<size_t>(r)] / med;
        v /= scaler.train_max[static_cast<size_t>(asset)];
        return v;
    };

    for (int i = 0; i < p; ++i) {
        const int64_t r = anchor - p + 1 + i;
        for (int a = 0; a < na; ++a) {
            if (sample.past.at({i, a}) != scaled_at(a, r, anchor)) return false;
        }
        const int64_t eh = raw.epoch_hours[static_cast<size_t>(r)];
        if (sample.past.at({i, na}) != hour_of_day(eh) / 23.0) return false;
        if (sample.past.at({i, na + 1}) != day_of_week(eh) / 6.0) return false;
    }
    for (int k = 0; k < horizon; ++k) {
        const int64_t r = anchor + 1 + k;
        const int64_t eh = raw.epoch_hours[static_cast<size_t>(r)];
        if (sample.future_known.at({k, 0}) != hour_of_day(eh) / 23.0) return false;
        if (sample.future_known.at({k, 1}) != day_of_week(eh) / 6.0) return false;
        // the target numerator is the label itself; its denominator window
        // must end at or before the anchor
        if (sample.target.at({k}) != scaled_at(raw.target_col, r, anchor)) return false;
    }
    return true;
}

uint64_t window_cache_key(uint64_t data_hash, int past_len, int horizon, int median_window) {
    uint64_t h = data_hash;
    h = h * 1099511628211ULL ^ static_cast<uint64_t>(past_len);
    h = h * 1099511628211ULL ^ static_cast<uint64_t>(horizon);
    h = h * 1099511628211ULL ^ static_cast<uint64_t>(median_window);
    return h;
}

namespace {
constexpr char kCacheMagic[8] = {'T', 'K', 'W', 'C', '0', '0', '0', '1'};

void write_tensor(std::ofstream& out, const Tensor& t) {
    const uint32_t rank = static_cast<uint32_t>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (int64_t d : t.shape()) out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_tensor(std::ifstream& in) {
    uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) {
        in.read(reinterpret_cast<char*>(&shape[d]), sizeof(int64_t));
    }
    std::vector<double> values(static_cast<size_t>(shape_size(shape)));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("window cache: truncated file");
    return Tensor::from_vector(std::move(shape), std::move(values));
}
}  // namespace

void save_window_cache(const std::string& path, const std::vector<WindowSample>& samples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open cache file " + path);
    out.write(kCacheMagic, sizeof(kCacheMagic));
    const uint64_t n = samples.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const WindowSample& s : samples) {
        out.write(reinterpret_cast<const char*>(&s.anchor), sizeof(s.anchor));
        write_tensor(out, s.past);
        write_tensor(out, s.future_known);
        write_tensor(out, s.target);
    }
    if (!out) throw std::runtime_error("cache write failed for " + path);
}

std::vector<WindowSample> load_window_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open cache file " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCacheMagic, sizeof(kCacheMagic)) != 0) {
        throw std::runtime_error("window cache: bad magic in " + path);
    }
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::vector<WindowSample> samples;
    samples.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        WindowSample s;
        in.read(reinterpret_cast<char*>(&s.anchor), sizeof(s.anchor));
        s.past = read_tensor(in);
        s.future_known = read_tensor(in);
        s.target = read_tensor(in);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace tkat
