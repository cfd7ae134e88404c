#include <iostream>

#include "dhmp/cli.hpp"

int main(int argc, char** argv) {
  return dhmp::cli::run(argc, argv, std::cout, std::cerr);
}
