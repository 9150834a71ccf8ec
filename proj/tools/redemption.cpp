#include <string>
#include <vector>

#include "redemption/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return redemption::cli::run_command(args);
}
