#include "trajmask/cli.hpp"

int main(int argc, char** argv) { return trajmask::run_cli(argc, argv); }
