#include "myoattn/cli.hpp"

int main(int argc, char** argv) {
  return myoattn::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
