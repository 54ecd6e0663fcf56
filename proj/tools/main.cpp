#include "catgan/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return catgan::run_cli(argc, argv, std::cout, std::cerr); }
