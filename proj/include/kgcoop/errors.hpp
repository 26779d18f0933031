#pragma once

#include <stdexcept>
#include <string>

namespace kgcoop {

// Base class for everything this library throws.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes that do not fit an operation. Messages name both shapes.
struct ShapeError : Error { using Error::Error; };

// Structurally valid input with no defined result (zero-norm vector in a
// cosine, for example).
struct DegenerateInputError : Error { using Error::Error; };

// Word not present in the closed vocabulary. Message names the word.
struct VocabError : Error { using Error::Error; };

// Bad run configuration: unknown key, unparsable value, out-of-range setting.
struct ConfigError : Error { using Error::Error; };

// Violated API contract (backward on a non-scalar, label out of range, ...).
struct ContractError : Error { using Error::Error; };

// Token sequence longer than the encoder accepts.
struct LengthError : Error { using Error::Error; };

// Malformed manifest or config text. Message carries line/field context.
struct ParseError : Error { using Error::Error; };

// Metric undefined for the given inputs (harmonic mean of two zeros, ...).
struct MetricError : Error { using Error::Error; };

// Filesystem failure while reading or writing run inputs/outputs.
struct IoError : Error { using Error::Error; };

// Non-finite loss or gradient during optimization. Carries the failing step.
struct TrainingDivergedError : Error {
  TrainingDivergedError(const std::string& what, int step_index)
      : Error(what), step(step_index) {}
  int step;
};

}  // namespace kgcoop
