#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return stx::cli_main(argc, argv, std::cout, std::cerr); }
