#include "opfenv/cli.hpp"

int main(int argc, char** argv) { return opfenv::cli::run(argc, argv); }
