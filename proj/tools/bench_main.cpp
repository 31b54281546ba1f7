#include <vector>

#include "tkat/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return tkat::bench_cli_main(args);
}
