#include <iostream>

#include <emograph/cli.hpp>

int main(int argc, char** argv) {
  return emograph::cli::run(argc, argv, std::cin, std::cout, std::cerr);
}
