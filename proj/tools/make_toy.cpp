#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: avd_toy OUT_DIR\n";
    return 2;
  }
  try {
    avd::cli::write_toy_dataset(argv[1]);
  } catch (const std::exception& e) {
    std::cerr << "avd_toy: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
