#include "kcone/cli.hpp"

int main(int argc, char** argv) { return kcone::run_cli(argc, argv); }
