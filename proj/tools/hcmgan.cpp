#include "hcmgan/cli.hpp"

int main(int argc, char** argv) { return hcmgan::cli::run(argc, argv); }
