#include "fpdecomp/cli.hpp"

int main(int argc, char** argv) { return fpdecomp::cli::run(argc, argv); }
