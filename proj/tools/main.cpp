#include "flowcaps/cli.hpp"

int main(int argc, const char* const* argv) { return fc::cli_main(argc, argv); }
