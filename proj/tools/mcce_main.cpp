#include <iostream>

#include "mcce/cli.hpp"

int main(int argc, char** argv) {
    return mcce::cli::main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
