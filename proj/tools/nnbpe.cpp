#include <iostream>

#include "nnbpe/cli.hpp"

int main(int argc, char** argv) { return nnbpe::run_cli(argc, argv, std::cout, std::cerr); }
