#include "conmil/cli.hpp"

int main(int argc, char** argv) { return conmil::cli::run(argc, argv); }
