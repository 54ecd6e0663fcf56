#pragma once

#include "catgan/data.hpp"

#include <iosfwd>
#include <vector>

namespace catgan {

/// Default shift of the `synth` command (and of the acceptance task).
Shift default_synth_shift();

/// Entry point of the `catgan` binary: synth, train, eval, generate, project.
/// Returns the process exit code; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace catgan
