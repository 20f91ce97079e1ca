#include <iostream>

#include "cvrank/cli.hpp"

int main(int argc, char** argv) { return cvrank::cli::run(argc, argv, std::cout, std::cerr); }
