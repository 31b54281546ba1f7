#pragma once

#include <string>
#include <vector>

namespace tkat {

// Entry point behind the `bench` binary; split out so tests can drive it.
int bench_cli_main(const std::vector<std::string>& args);

}  // namespace tkat
