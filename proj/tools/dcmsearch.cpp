#include "dcmsearch/cli.hpp"

int main(int argc, char** argv) { return dcmsearch::run_cli(argc, argv); }
