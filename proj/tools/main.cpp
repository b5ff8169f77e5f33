#include "smoothlab/cli.hpp"

int main(int argc, char** argv) { return smoothlab::cli::run(argc, argv); }
