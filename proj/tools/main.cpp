#include <iostream>

#include "bnwvad/cli.hpp"

int main(int argc, char** argv) { return bnwvad::cli::run(argc, argv, std::cout, std::cerr); }
