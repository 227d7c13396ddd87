#include "sl0sr/cli.hpp"

int main(int argc, char** argv) { return sl0sr::cli::run(argc, argv); }
