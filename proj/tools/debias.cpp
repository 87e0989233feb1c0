#include "debias_cli.hpp"

int main(int argc, char** argv) { return debias::cli::run(argc, argv); }
