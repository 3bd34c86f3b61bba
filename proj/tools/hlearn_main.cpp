#include <iostream>

#include "hlearn/cli.hpp"

int main(int argc, char** argv) { return hlearn::run_cli(argc, argv, std::cout, std::cerr); }
