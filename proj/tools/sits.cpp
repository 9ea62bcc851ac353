#include "commands.hpp"

int main(int argc, char** argv) { return sits::cli::run(argc, argv); }
