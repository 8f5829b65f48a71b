#include "explirec/cli.hpp"

int main(int argc, char** argv) { return explirec::run_command(argc, argv); }
