#include "gcap/cli.hpp"

int main(int argc, char** argv) { return gcap::cli::run(argc, argv); }
