#pragma once

#include <stdexcept>
#include <string>

namespace brepmae {

// All library failures derive from Error and carry a stable machine-readable
// kind string (used by the CLI to emit error JSON).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define BREPMAE_DEFINE_ERROR(Name)                        \
  class Name : public Error {                             \
   public:                                                \
    explicit Name(const std::string& message)             \
        : Error(#Name, message) {}                        \
  }

BREPMAE_DEFINE_ERROR(SchemaError);
BREPMAE_DEFINE_ERROR(ReferenceError);
BREPMAE_DEFINE_ERROR(DomainError);
BREPMAE_DEFINE_ERROR(UnsupportedKind);
BREPMAE_DEFINE_ERROR(DegenerateExtent);
BREPMAE_DEFINE_ERROR(PreimageError);
BREPMAE_DEFINE_ERROR(InvalidSolid);
BREPMAE_DEFINE_ERROR(EmptyDataset);
BREPMAE_DEFINE_ERROR(ShapeError);
BREPMAE_DEFINE_ERROR(NotScalar);
BREPMAE_DEFINE_ERROR(RangeError);
BREPMAE_DEFINE_ERROR(TooFewNodes);
BREPMAE_DEFINE_ERROR(EmptyMask);
BREPMAE_DEFINE_ERROR(MissingNamespace);
BREPMAE_DEFINE_ERROR(LabelOutOfRange);
BREPMAE_DEFINE_ERROR(EmptyInput);
BREPMAE_DEFINE_ERROR(InsufficientModels);
BREPMAE_DEFINE_ERROR(OverlapError);
BREPMAE_DEFINE_ERROR(PlacementError);
BREPMAE_DEFINE_ERROR(InsufficientParts);
BREPMAE_DEFINE_ERROR(ConfigError);
BREPMAE_DEFINE_ERROR(IoError);

#undef BREPMAE_DEFINE_ERROR

}  // namespace brepmae
