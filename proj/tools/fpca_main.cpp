#include <iostream>
#include <string>
#include <vector>

#include "fpca/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fpca::cli::main(args, std::cout, std::cerr);
}
