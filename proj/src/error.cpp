#include "volharm/error.hpp"

namespace volharm {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::ZeroVariancePair: return "ZeroVariancePair";
    case Errc::EmptyHistogram: return "EmptyHistogram";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::SingularMatrix: return "SingularMatrix";
    case Errc::ReflectionNotSupported: return "ReflectionNotSupported";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::DegenerateAges: return "DegenerateAges";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::AllWeightsPruned: return "AllWeightsPruned";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::TooFewSubjects: return "TooFewSubjects";
    case Errc::MissingAge: return "MissingAge";
    case Errc::CohortTooSmall: return "CohortTooSmall";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::IoError: return "IoError";
    case Errc::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case Errc::NoEligibleScanners: return "NoEligibleScanners";
    case Errc::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case Errc::IncompleteDesign: return "IncompleteDesign";
    case Errc::DegenerateDifferences: return "DegenerateDifferences";
    case Errc::InvalidSpec: return "InvalidSpec";
  }
  return "UnknownError";
}

bool is_data_error(Errc code) {
  switch (code) {
    case Errc::NotPositiveDefinite:
    case Errc::AllWeightsPruned:
    case Errc::NoConvergence:
      return false;
    default:
      return true;
  }
}

}  // namespace volharm
