#pragma once

#include <string>

#include "json.hpp"

#include "tkat/model.hpp"

namespace tkat {

// Binary checkpoint: a manifest (config, seed, model kind) followed by a
// map from canonical parameter path to shape + row-major float64 values.
// Round-trips bit-exactly.
void save_checkpoint(const std::string& path, ForecastModel& model,
                     const nlohmann::json& manifest);

// Loads parameters by name into the model; shapes must match. Returns the
// stored manifest.
nlohmann::json load_checkpoint(const std::string& path, ForecastModel& model);

}  // namespace tkat
