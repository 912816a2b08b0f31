#include "ipatch/cli.hpp"

int main(int argc, char** argv) { return ipatch::cli::run(argc, argv); }
