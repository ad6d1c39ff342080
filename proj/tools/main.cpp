#include "sinesr/cli.hpp"

int main(int argc, char** argv) { return sinesr::cli::run(argc, argv); }
