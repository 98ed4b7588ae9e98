#include <iostream>

#include "shiftlens/cli.hpp"

int main(int argc, char** argv) {
  return shiftlens::cli::run(argc, argv, std::cout, std::cerr);
}
