#include "protoem/cli.hpp"

int main(int argc, char** argv) { return protoem::cli::run(argc, argv); }
