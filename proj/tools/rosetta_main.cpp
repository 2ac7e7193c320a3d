// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/cli.hpp"

int main(int argc, char** argv) { return rosetta::cli::run(argc, argv); }
