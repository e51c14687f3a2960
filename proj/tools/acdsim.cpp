#include "acdsim/cli.hpp"

int main(int argc, char** argv) { return acdsim::cli::run_cli(argc, argv); }
