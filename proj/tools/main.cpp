#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return cvp::cli::run(argc, argv, std::cout, std::cerr); }
