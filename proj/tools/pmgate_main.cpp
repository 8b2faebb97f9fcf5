// Command-line front end; all logic lives in pmgate/cli.hpp so it can be
// tested in-process.

#include "pmgate/cli.hpp"

int main(int argc, char** argv) { return pmgate::cli::run(argc, argv); }
