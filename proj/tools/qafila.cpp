#include <iostream>
#include <string>
#include <vector>

#include "qafila/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return qafila::dispatch(args, std::cout, std::cerr);
}
