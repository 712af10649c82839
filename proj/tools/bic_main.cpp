#include <iostream>
#include <string>
#include <vector>

#include "bic/experiment.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return bic::run_cli(args, std::cout, std::cerr);
}
