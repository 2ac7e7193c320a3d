// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rosetta {

enum class ErrorKind {
  MissingFile,
  SchemaViolation,
  ChunkCoverageError,
  SizeMismatch,
  RangeOutOfBounds,
  IoError,
  CorruptChunk,
  DegenerateSampleCount,
  MissingStats,
  ZeroVariance,
  InstanceCountMismatch,
  OutOfBudget,
  KMismatch,
  GeneratorMismatch,
  ModelMismatch,
  InconsistentRun,
  MissingImage,
  ShiftOutOfRange,
  UnknownUnit,
  InvalidSpec,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries one of the kinds above.
// what() is "<Kind>: <detail>" so the CLI can print it unchanged.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rosetta
