// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/error.hpp"

namespace rosetta {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::ChunkCoverageError: return "ChunkCoverageError";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::RangeOutOfBounds: return "RangeOutOfBounds";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::CorruptChunk: return "CorruptChunk";
    case ErrorKind::DegenerateSampleCount: return "DegenerateSampleCount";
    case ErrorKind::MissingStats: return "MissingStats";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::InstanceCountMismatch: return "InstanceCountMismatch";
    case ErrorKind::OutOfBudget: return "OutOfBudget";
    case ErrorKind::KMismatch: return "KMismatch";
    case ErrorKind::GeneratorMismatch: return "GeneratorMismatch";
    case ErrorKind::ModelMismatch: return "ModelMismatch";
    case ErrorKind::InconsistentRun: return "InconsistentRun";
    case ErrorKind::MissingImage: return "MissingImage";
    case ErrorKind::ShiftOutOfRange: return "ShiftOutOfRange";
    case ErrorKind::UnknownUnit: return "UnknownUnit";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

}  // namespace rosetta
