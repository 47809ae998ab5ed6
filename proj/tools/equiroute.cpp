#include "equiroute/cli.hpp"

int main(int argc, char** argv) { return equiroute::run_cli(argc, argv); }
