#pragma once

#include <stdexcept>
#include <string>

namespace volharm {

// Every failure mode the library reports. The CLI maps these onto exit codes:
// data/schema problems -> 2, numerical failures -> 3.
enum class Errc {
  // descriptors
  ZeroVariancePair,
  EmptyHistogram,
  LengthMismatch,
  SingularMatrix,
  ReflectionNotSupported,
  NonFiniteInput,
  // detrend
  TooFewSamples,
  DegenerateAges,
  // rvm
  DimensionMismatch,
  NotPositiveDefinite,
  AllWeightsPruned,
  NoConvergence,
  // harmonize
  TooFewSubjects,
  MissingAge,
  CohortTooSmall,
  SchemaMismatch,
  IoError,
  SchemaVersionMismatch,
  // evaluate
  NoEligibleScanners,
  ZeroVarianceColumn,
  IncompleteDesign,
  DegenerateDifferences,
  // synth
  InvalidSpec,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

// True for error classes caused by bad input data rather than numerics.
bool is_data_error(Errc code);

}  // namespace volharm
