#include <iostream>

#include "lff/cli.hpp"

int main(int argc, char** argv) { return lff::cli::run(argc, argv, std::cout, std::cerr); }
