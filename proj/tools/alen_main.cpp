#include "alen/cli.hpp"

int main(int argc, char** argv) { return alen::run_cli(argc, argv); }
