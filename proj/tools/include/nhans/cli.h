// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NHANS_CLI_H_
#define NHANS_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace nhans::cli {

/// Runs one command line (args[0] is the program name). Diagnostics go to
/// err; results are only ever written to files. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& err);

int main(int argc, char** argv);

}  // namespace nhans::cli

#endif  // NHANS_CLI_H_
