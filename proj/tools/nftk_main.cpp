#include <iostream>
#include <string>
#include <vector>

#include "nftk/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nftk::cli::dispatch(args, std::cout, std::cerr);
}
