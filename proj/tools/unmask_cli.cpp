#include <iostream>
#include <string>
#include <vector>

#include "unmask/experiment.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return unmask::run_cli(args, std::cout, std::cerr);
}
