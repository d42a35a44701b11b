#include "cli.hpp"

int main(int argc, char** argv) { return abrbench::cli::run(argc, argv); }
