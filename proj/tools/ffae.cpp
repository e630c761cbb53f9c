#include "ffae/cli.hpp"

int main(int argc, char** argv) { return ffae::cli::main_entry(argc, argv); }
