#pragma once

#include <string>

namespace esslam {

// Entry point of the esslam executable. Returns 0 on success, 2 on bad configuration, 1 on runtime failure.
int run_cli(int argc, char** argv);

std::string format_number(double v);

}  // namespace esslam
