#include <iostream>

#include "mmgl_cli/cli.hpp"

int main(int argc, char** argv) { return mmgl::cli::run(argc, argv, std::cout, std::cerr); }
