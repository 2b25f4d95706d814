#include "klora/runner.hpp"

int main(int argc, char** argv) { return klora::run_cli(argc, argv); }
