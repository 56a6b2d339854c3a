#include "cli.hpp"

int main(int argc, char** argv) { return psse::cli::run_command(argc, argv); }
