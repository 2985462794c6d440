#include <iostream>

#include "rnnlab/cli.hpp"

int main(int argc, char** argv) { return rnnlab::run_cli(argc, argv, std::cout, std::cerr); }
