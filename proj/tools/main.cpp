#include <iostream>
#include <string>
#include <vector>

#include "svyexp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return svyexp::run_cli(args, std::cout, std::cerr);
}
