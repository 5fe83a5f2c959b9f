#include "modeshape/cli.hpp"

int main(int argc, char** argv) { return modeshape::cli::dispatch(argc, argv); }
