#include <string>
#include <vector>

#include "swarmform/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return swarmform::cli(args);
}
