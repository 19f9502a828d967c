#include <iostream>
#include <string>
#include <vector>

#include "hgr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return hgr::cli_dispatch(args, std::cout, std::cerr);
}
