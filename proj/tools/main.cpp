#include "rwkvir/commands.hpp"

int main(int argc, char** argv) { return rwkvir::cli::run(argc, argv); }
