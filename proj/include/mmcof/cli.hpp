#pragma once

#include <string>
#include <vector>

namespace mmcof {

// Subcommands: flow, mmcof, train, evaluate, visualize, synth, gradcheck.
// Returns 0 on success, 1 on a domain/runtime error, 2 on a usage error.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);  // args without the program name

}  // namespace mmcof
