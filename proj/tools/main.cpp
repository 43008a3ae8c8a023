#include "xnorforge/cli.hpp"

int main(int argc, char** argv) { return xnorforge::run_cli(argc, argv); }
