#include <iostream>

#include "mentor/cli.hpp"

int main(int argc, char** argv) { return mentor::run_cli(argc, argv, std::cout, std::cerr); }
