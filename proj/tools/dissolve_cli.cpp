#include <iostream>

#include "dissolve/cli.hpp"

int main(int argc, char** argv) { return dissolve::run_cli(argc, argv, std::cout, std::cerr); }
