#include "stenokit/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return stenokit::run_cli(argc, argv, std::cout, std::cerr); }
