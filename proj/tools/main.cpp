#include "cli.hpp"

int main(int argc, char** argv) { return mmsift::cli::run(argc, argv); }
