#include "acscale/cli.hpp"

int main(int argc, char** argv) { return acscale::run_cli(argc, argv); }
