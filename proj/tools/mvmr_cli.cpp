#include "mvmr/cli.hpp"

int main(int argc, char** argv) { return mvmr::cli::run(argc, argv); }
