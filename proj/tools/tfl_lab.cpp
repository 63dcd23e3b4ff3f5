#include <iostream>

#include "tfl/cli.hpp"

int main(int argc, char** argv) { return tfl::run_cli(argc, argv, std::cout, std::cerr); }
