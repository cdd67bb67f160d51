#include "projsynth/cli.hpp"

int main(int argc, char** argv) { return projsynth::cli::run(argc, argv); }
