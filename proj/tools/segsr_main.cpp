#include "segsr/cli.hpp"

int main(int argc, char** argv) { return segsr::cli::run(argc, argv); }
