#include "tkat/synth.hpp"

#include <cmath>
#include <stdexcept>

#include "tkat/rng.hpp"

namespace tkat {

RawSeriesTable synth_series(int64_t hours, int assets, uint64_t seed) {
    if (hours < 2 || assets < 1) {
        throw std::invalid_argument("synth_series: need hours >= 2 and assets >= 1");
    }
    const double two_pi = 6.283185307179586476925287;
    RawSeriesTable table;
    const int64_t start = parse_iso_hour("2020-01-01T00:00:00Z");
    table.epoch_hours.resize(static_cast<size_t>(hours));
    for (int64_t t = 0; t < hours; ++t) table.epoch_hours[static_cast<size_t>(t)] = start + t;

    table.columns.reserve(static_cast<size_t>(assets));
    table.values.assign(static_cast<size_t>(assets), {});
    for (int a = 0; a < assets; ++a) {
        table.columns.push_back("ASSET" + std::to_string(a + 1));
        Rng rng(mix_seed(seed, fnv1a(table.columns.back())));
        const double base = std::exp(rng.uniform(1.0, 4.0));
        const double amp_day = rng.uniform(0.5, 1.1);
        const double amp_week = rng.uniform(0.2, 0.5);
        const double phase_day = rng.uniform(0.0, two_pi);
        const double phase_week = rng.uniform(0.0, two_pi);
        const double rho = rng.uniform(0.85, 0.97);
        const double sigma = rng.uniform(0.12, 0.3);

        std::vector<double>& col = table.values[static_cast<size_t>(a)];
        col.resize(static_cast<size_t>(hours));
        double z = 0.0;
        for (int64_t t = 0; t < hours; ++t) {
            z = rho * z + sigma * rng.normal();
            const double season =
                amp_day * std::sin(two_pi * static_cast<double>(t) / 24.0 + phase_day) +
                amp_week * std::sin(two_pi * static_cast<double>(t) / 168.0 + phase_week);
            col[static_cast<size_t>(t)] = base * std::exp(season) * std::exp(z);
        }
    }
    table.target_col = 0;
    return table;
}

}  // namespace tkat
