// SPDX-License-Identifier: Apache-2.0
#pragma once

// Single-file NIfTI-1 (.nii) reader and writer. Only uncompressed files with
// int16, float32 or float64 payloads are supported. Byte order is detected
// from sizeof_hdr, which reads as 348 in the file's native order.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "drope/tensor.hpp"

namespace drope::nifti {

enum class Datatype : std::int16_t { int16 = 4, float32 = 16, float64 = 64 };

struct Header {
  std::int32_t sizeof_hdr = 348;
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = 0;
  std::int16_t bitpix = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = 352.0f;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::array<char, 4> magic{};
  bool big_endian = false;

  std::size_t rank() const { return static_cast<std::size_t>(dim[0]); }
  std::string magic_string() const;
};

class Error : public std::runtime_error {
 public:
  enum class Kind { io, bad_header, bad_magic, unsupported_datatype, truncated };
  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Image {
  Header header;
  /// Extents in (x, y, z[, t]) order; at({x, y, z, t}) addresses a voxel.
  nd::Tensor data;
  std::array<double, 3> spacing() const {
    return {header.pixdim[1], header.pixdim[2], header.pixdim[3]};
  }
};

Header read_header(const std::filesystem::path& path);
/// Payload is scaled by scl_slope / scl_inter when the slope is nonzero.
Image read(const std::filesystem::path& path);

/// `data` has rank 1..7 with extents in (x, y, z, ...) order. Writes a
/// little-endian single file with vox_offset 352 and no intensity scaling.
void write(const nd::Tensor& data, const std::array<double, 3>& spacing,
           const std::filesystem::path& path, Datatype type = Datatype::float64);

}  // namespace drope::nifti
