#include "elect/cli.hpp"

int main(int argc, char** argv) { return elect::cli::run_cli(argc, argv); }
