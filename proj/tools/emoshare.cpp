#include "emoshare/cli.hpp"

int main(int argc, char** argv) { return emoshare::run_cli(argc, argv); }
