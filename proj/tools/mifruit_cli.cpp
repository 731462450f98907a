#include <iostream>

#include "mifruit/cli.hpp"

int main(int argc, char** argv) {
  mifruit::tune_allocator();
  return mifruit::cli::run_cli(argc, argv, std::cout, std::cerr);
}
