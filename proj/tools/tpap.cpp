#include <iostream>
#include <string>
#include <vector>

#include "tpap/cli.hpp"

int main(int argc, char** argv) {
  return tpap::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
