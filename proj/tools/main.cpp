#include "dbgi/cli.hpp"

int main(int argc, char** argv) { return dbgi::cli::run(argc, argv); }
