#include "expreg/harness.hpp"

int main(int argc, char** argv) { return expreg::harness::run_cli(argc, argv); }
