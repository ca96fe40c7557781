#include "commands.hpp"

int main(int argc, char** argv) { return proxsel::cli::run_cli(argc, argv); }
