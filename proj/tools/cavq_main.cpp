#include <iostream>

#include "cavq/cli.hpp"

int main(int argc, char** argv) { return cavq::cli::run(argc, argv, std::cout, std::cerr); }
