#include <iostream>

#include "nsfold/cli.hpp"
#include "nsfold/trainer.hpp"

int main(int argc, char** argv) {
  nsfold::tune_allocator();
  return nsfold::cli_main(argc, argv, std::cout, std::cerr);
}
