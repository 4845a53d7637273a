#include <iostream>

#include "lcot/cli.hpp"

int main(int argc, char** argv) { return lcot::runCli(argc, argv, std::cout, std::cerr); }
