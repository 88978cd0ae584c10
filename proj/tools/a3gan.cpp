#include "a3gan/cli.hpp"

int main(int argc, char** argv) { return a3gan::cli::run(argc, argv); }
