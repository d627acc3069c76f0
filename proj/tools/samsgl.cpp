#include "samsgl/cli.hpp"

int main(int argc, char** argv) { return samsgl::cli::run(argc, argv); }
