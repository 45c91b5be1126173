#include "metadenoise/cli.hpp"

int main(int argc, char** argv) { return metadenoise::run_cli(argc, argv); }
