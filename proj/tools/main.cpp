#include <iostream>

#include "clarifyir/cli.hpp"

int main(int argc, char** argv) { return clarifyir::cli_dispatch(argc, argv, std::cout, std::cerr); }
