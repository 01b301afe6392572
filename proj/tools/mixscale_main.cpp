#include "mixscale/runtime/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return mixscale::run_cli(args);
}
