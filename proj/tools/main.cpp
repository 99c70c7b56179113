#include "fedsketch/cli.hpp"

int main(int argc, char** argv) { return fedsketch::cli::run_cli(argc, argv); }
