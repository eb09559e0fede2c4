#include "gae/cli.hpp"

int main(int argc, char** argv) { return gae::run_cli(argc, argv); }
