#include <iostream>

#include "cmmmix/cli.hpp"

int main(int argc, char** argv) { return cmmmix::run_cli(argc, argv, std::cout, std::cerr); }
