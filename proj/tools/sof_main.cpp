#include "sof/cli.hpp"

int main(int argc, char** argv) { return sof::run_cli(argc, argv); }
