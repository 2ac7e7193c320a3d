// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rosetta::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 success, 1 runtime error ("error: <Kind>: <detail>" on
// stderr), 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace rosetta::cli
