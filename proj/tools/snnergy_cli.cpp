#include "snnergy/cli.hpp"

int main(int argc, char** argv) { return snnergy::cli_main(argc, argv); }
