#include "pixio/cli.hpp"

int main(int argc, char** argv) { return pixio::cli_main(argc, argv); }
