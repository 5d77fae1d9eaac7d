// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nhans/cli.h"

int main(int argc, char** argv) { return nhans::cli::main(argc, argv); }
