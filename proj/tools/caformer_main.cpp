#include "caformer/cli.hpp"

int main(int argc, char** argv) { return caformer::run_command(argc, argv); }
