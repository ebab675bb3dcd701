#include "gvc/cli.hpp"

int main(int argc, char** argv) { return gvc::cli::run(argc, argv); }
