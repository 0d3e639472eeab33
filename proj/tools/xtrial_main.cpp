#include <vector>

#include "xtrial/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return xtrial::run_cli(args);
}
