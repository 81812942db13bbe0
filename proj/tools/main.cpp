#include "commands.hpp"

int main(int argc, char** argv) { return avd::cli::run(argc, argv); }
