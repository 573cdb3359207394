#include <iostream>

#include "indexprobe/cli.hpp"

int main(int argc, char** argv) { return indexprobe::cli::run(argc, argv, std::cout, std::cerr); }
