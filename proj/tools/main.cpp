#include "shapeopt/cli.hpp"

int main(int argc, char** argv) { return shapeopt::run_cli(argc, argv); }
