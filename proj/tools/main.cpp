#include <iostream>
#include <string>
#include <vector>

#include "riemflow/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return riemflow::cli::run(args, std::cout, std::cerr);
}
