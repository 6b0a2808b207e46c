#include <string>
#include <vector>

#include "hdtest/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hdtest::cli::run(args);
}
