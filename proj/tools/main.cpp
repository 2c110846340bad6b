#include "commands.hpp"

int main(int argc, char** argv) { return p3d::cli::run(argc, argv); }
