#include "hartree/cli.hpp"

int main(int argc, char** argv) { return hartree::cli_main(argc, argv); }
