#pragma once

#include <stdexcept>
#include <string>

namespace ptgan {

/// Base of every error raised by the library. `kind()` is a stable short
/// name used by the CLI for diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Raised for bad user input (configs, specs, arguments). The CLI maps these
/// to the validation exit code.
class ValidationError : public Error {
 public:
  using Error::Error;
};

#define PTGAN_DEFINE_ERROR(Name, Base)                                 \
  class Name : public Base {                                           \
   public:                                                             \
    explicit Name(const std::string& what) : Base(#Name, what) {}      \
  };

// data_model
PTGAN_DEFINE_ERROR(MalformedFilename, ValidationError)
PTGAN_DEFINE_ERROR(EmptyDataset, ValidationError)
PTGAN_DEFINE_ERROR(TooFewIdentities, ValidationError)
PTGAN_DEFINE_ERROR(InvalidConfig, ValidationError)
PTGAN_DEFINE_ERROR(DuplicatePath, ValidationError)
PTGAN_DEFINE_ERROR(CorruptManifest, ValidationError)
PTGAN_DEFINE_ERROR(ImageDecodeError, Error)

// masks
PTGAN_DEFINE_ERROR(MissingMask, Error)
PTGAN_DEFINE_ERROR(CorruptMask, Error)

// model
PTGAN_DEFINE_ERROR(InvalidSpec, ValidationError)
PTGAN_DEFINE_ERROR(NonFiniteScores, Error)
PTGAN_DEFINE_ERROR(ShapeMismatch, Error)

// training
PTGAN_DEFINE_ERROR(NonFiniteLoss, Error)
PTGAN_DEFINE_ERROR(DataStarvation, ValidationError)
PTGAN_DEFINE_ERROR(CorruptCheckpoint, Error)
PTGAN_DEFINE_ERROR(VersionMismatch, Error)

// transfer / evaluation
PTGAN_DEFINE_ERROR(AlignmentMismatch, ValidationError)
PTGAN_DEFINE_ERROR(EmptyGallery, ValidationError)
PTGAN_DEFINE_ERROR(DimensionMismatch, ValidationError)

#undef PTGAN_DEFINE_ERROR

}  // namespace ptgan
