#pragma once

#include <cstdint>

#include "tkat/data.hpp"

namespace tkat {

// Synthetic hourly notional series: per asset a positive base scale,
// multiplicative daily (period 24) and weekly (period 168) seasonality,
// and lognormal AR(1) noise. Deterministic in the seed; first timestamp
// is 2020-01-01T00:00:00Z.
RawSeriesTable synth_series(int64_t hours, int assets, uint64_t seed);

}  // namespace tkat
