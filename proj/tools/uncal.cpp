#include <iostream>
#include <string>
#include <vector>

#include "uncal/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return uncal::cli::run_pipeline(args, std::cout, std::cerr);
}
