#include "esslam/cli.hpp"

int main(int argc, char** argv) { return esslam::run_cli(argc, argv); }
