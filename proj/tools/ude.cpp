#include <iostream>

#include "ude/cli/commands.hpp"

int main(int argc, char** argv) { return ude::cli::run(argc, argv, std::cout, std::cerr); }
