#pragma once

#include <stdexcept>
#include <string>

namespace decoherence {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define DECOHERENCE_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(#Name, what) {}      \
  };

DECOHERENCE_DEFINE_ERROR(UnphysicalState)
DECOHERENCE_DEFINE_ERROR(DegenerateCoeffs)
DECOHERENCE_DEFINE_ERROR(DegenerateEnvironment)
DECOHERENCE_DEFINE_ERROR(NormalizabilityLoss)
DECOHERENCE_DEFINE_ERROR(DimensionMismatch)
DECOHERENCE_DEFINE_ERROR(InvalidParameters)
DECOHERENCE_DEFINE_ERROR(InvertedOscillator)
DECOHERENCE_DEFINE_ERROR(ResonantDivergence)
DECOHERENCE_DEFINE_ERROR(EntangledInitialState)
DECOHERENCE_DEFINE_ERROR(InsufficientSampling)
DECOHERENCE_DEFINE_ERROR(UnknownPreset)
DECOHERENCE_DEFINE_ERROR(ConfigError)
DECOHERENCE_DEFINE_ERROR(IoError)

#undef DECOHERENCE_DEFINE_ERROR

}  // namespace decoherence
