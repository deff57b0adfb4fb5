#include "fpcm/cli.hpp"

int main(int argc, char** argv) { return fpcm::cli::run(argc, argv); }
