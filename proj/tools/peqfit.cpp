#include "peqfit/cli.hpp"

int main(int argc, char** argv) { return peqfit::cli::run(argc, argv); }
