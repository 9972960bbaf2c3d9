#include <iostream>

#include "rsg/cli.hpp"

int main(int argc, char** argv) {
  return rsg::cli::run(argc, argv, std::cout, std::cerr);
}
