#include "bandgap/cli.hpp"

int main(int argc, char** argv) { return bandgap::cli::run(argc, argv); }
