#include "commands.hpp"

int main(int argc, char** argv) { return sparsepose::cli::run(argc, argv); }
