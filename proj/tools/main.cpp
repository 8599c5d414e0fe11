#include <iostream>

#include "fieldscribe/cli.hpp"

int main(int argc, char** argv) { return fieldscribe::cli::run(argc, argv, std::cout, std::cerr); }
