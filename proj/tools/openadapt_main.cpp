#include <iostream>

#include "openadapt/cli.hpp"

int main(int argc, char** argv) { return openadapt::run_cli(argc, argv, std::cout, std::cerr); }
