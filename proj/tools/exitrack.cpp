#include <iostream>

#include "exitrack/cli/commands.hpp"

int main(int argc, char** argv) {
  return exitrack::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
