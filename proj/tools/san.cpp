#include "san/cli.hpp"

int main(int argc, char** argv) { return san::cli::run(argc, argv); }
