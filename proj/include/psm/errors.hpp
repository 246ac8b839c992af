#pragma once

#include <stdexcept>
#include <string>

namespace psm {

// Shared error taxonomy. Every failure is thrown; no sentinel returns.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible (matmul, attention, affine combine, ...).
struct DimensionError : Error {
  using Error::Error;
};

// Sequence length violates a precondition (not a power of two, wrong chunk
// length, token id out of vocabulary).
struct LengthError : Error {
  using Error::Error;
};

// Counter slot index would exceed 63; streams beyond 2^63 elements are
// unsupported.
struct OverflowError : Error {
  using Error::Error;
};

// Emit requested from a counter that has seen no elements.
struct EmptyError : Error {
  using Error::Error;
};

// File missing or not readable/writable.
struct IoError : Error {
  using Error::Error;
};

// Weight file has a bad magic number or an unsupported format version.
struct FormatError : Error {
  using Error::Error;
};

// Weight file is truncated or fails its checksum.
struct CorruptFileError : Error {
  using Error::Error;
};

// Weight name unknown, duplicated, or a shape disagrees with the manifest.
struct ManifestError : Error {
  using Error::Error;
};

}  // namespace psm
