#include <string>
#include <vector>

#include "measground/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return measground::cli::run(args);
}
