#include "commands.hpp"

int main(int argc, char** argv) { return fslrun::run_cli(argc, argv); }
