#include <iostream>

#include "functa/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return functa::cli::run(args, std::cout, std::cerr);
}
