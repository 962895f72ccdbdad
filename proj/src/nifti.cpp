// SPDX-License-Identifier: Apache-2.0
#include "drope/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace drope::nifti {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;

// Byte offsets of the fields used here (NIfTI-1 layout).
constexpr std::size_t kDim = 40, kDatatype = 70, kBitpix = 72, kPixdim = 76, kVoxOffset = 108,
                      kSclSlope = 112, kSclInter = 116, kXyztUnits = 123, kSformCode = 254,
                      kSrowX = 280, kMagic = 344;

template <typename T>
T byteswap(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <typename T>
T load(const unsigned char* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return swap ? byteswap(v) : v;
}

template <typename T>
void store(std::vector<unsigned char>& buf, std::size_t off, T v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Error::Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Header parse_header(const std::vector<unsigned char>& buf, const std::string& name) {
  if (buf.size() < kHeaderSize)
    throw Error(Error::Kind::truncated, name + ": file shorter than a NIfTI-1 header");
  Header h;
  const auto* p = buf.data();
  const auto le = load<std::int32_t>(p, false);
  if (le == 348) {
    h.big_endian = false;
  } else if (byteswap(le) == 348) {
    h.big_endian = true;
  } else {
    throw Error(Error::Kind::bad_header, name + ": sizeof_hdr is not 348 in either byte order");
  }
  const bool sw = h.big_endian;
  std::memcpy(h.magic.data(), p + kMagic, 4);
  const std::string magic = h.magic_string();
  if (magic == "ni1")
    throw Error(Error::Kind::bad_magic, name + ": detached header/image pairs are not supported");
  if (magic != "n+1" || h.magic[3] != '\0')
    throw Error(Error::Kind::bad_magic, name + ": bad magic \"" + magic + "\"");

  for (std::size_t i = 0; i < 8; ++i) h.dim[i] = load<std::int16_t>(p + kDim + 2 * i, sw);
  for (std::size_t i = 0; i < 8; ++i) h.pixdim[i] = load<float>(p + kPixdim + 4 * i, sw);
  h.datatype = load<std::int16_t>(p + kDatatype, sw);
  h.bitpix = load<std::int16_t>(p + kBitpix, sw);
  h.vox_offset = load<float>(p + kVoxOffset, sw);
  h.scl_slope = load<float>(p + kSclSlope, sw);
  h.scl_inter = load<float>(p + kSclInter, sw);

  if (h.dim[0] < 1 || h.dim[0] > 7)
    throw Error(Error::Kind::bad_header, name + ": dim[0] outside 1..7");
  for (std::size_t i = 1; i <= h.rank(); ++i)
    if (h.dim[i] < 1) throw Error(Error::Kind::bad_header, name + ": non-positive extent");
  int bits = 0;
  switch (static_cast<Datatype>(h.datatype)) {
    case Datatype::int16: bits = 16; break;
    case Datatype::float32: bits = 32; break;
    case Datatype::float64: bits = 64; break;
    default:
      throw Error(Error::Kind::unsupported_datatype,
                  name + ": unsupported datatype code " + std::to_string(h.datatype));
  }
  if (h.bitpix != bits) throw Error(Error::Kind::bad_header, name + ": bitpix/datatype mismatch");
  if (!(h.vox_offset >= static_cast<float>(kDataOffset)) || h.vox_offset != std::floor(h.vox_offset))
    throw Error(Error::Kind::bad_header, name + ": vox_offset must be an integer >= 352");
  return h;
}

}  // namespace

std::string Header::magic_string() const {
  return std::string(magic.data(), strnlen(magic.data(), magic.size()));
}

Header read_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Error::Kind::io, "cannot open " + path.string());
  std::vector<unsigned char> buf(kHeaderSize);
  in.read(reinterpret_cast<char*>(buf.data()), kHeaderSize);
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(buf, path.string());
}

Image read(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  Image img;
  img.header = parse_header(buf, path.string());
  const Header& h = img.header;

  nd::Shape shape(h.rank());
  for (std::size_t i = 0; i < h.rank(); ++i) shape[i] = static_cast<std::size_t>(h.dim[i + 1]);
  const std::size_t n = nd::numel(shape);
  const std::size_t bytes = static_cast<std::size_t>(h.bitpix / 8);
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (buf.size() < offset || buf.size() - offset < n * bytes)
    throw Error(Error::Kind::truncated, path.string() + ": payload shorter than the header implies");

  // File order is x fastest; the tensor is row-major with x slowest.
  std::vector<std::size_t> stride(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) stride[i - 1] = stride[i] * shape[i];
  const bool scaled = h.scl_slope != 0.0f && std::isfinite(h.scl_slope);
  const double slope = h.scl_slope, inter = h.scl_inter;
  std::vector<double> out(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  const unsigned char* p = buf.data() + offset;
  for (std::size_t f = 0; f < n; ++f, p += bytes) {
    double v = 0.0;
    switch (static_cast<Datatype>(h.datatype)) {
      case Datatype::int16: v = load<std::int16_t>(p, h.big_endian); break;
      case Datatype::float32: v = load<float>(p, h.big_endian); break;
      case Datatype::float64: v = load<double>(p, h.big_endian); break;
    }
    if (scaled) v = slope * v + inter;
    std::size_t t = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) t += idx[a] * stride[a];
    out[t] = v;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }
  img.data = nd::Tensor::from(std::move(shape), std::move(out));
  return img;
}

void write(const nd::Tensor& data, const std::array<double, 3>& spacing,
           const std::filesystem::path& path, Datatype type) {
  const auto& shape = data.shape();
  if (shape.empty() || shape.size() > 7)
    throw std::invalid_argument("nifti::write: rank must be 1..7");
  for (auto e : shape)
    if (e == 0 || e > 32767) throw std::invalid_argument("nifti::write: extent out of range");

  const std::size_t bytes = type == Datatype::int16 ? 2 : type == Datatype::float32 ? 4 : 8;
  const std::size_t n = data.numel();
  std::vector<unsigned char> buf(kDataOffset + n * bytes, 0);
  store<std::int32_t>(buf, 0, 348);
  store<std::int16_t>(buf, kDim, static_cast<std::int16_t>(shape.size()));
  for (std::size_t i = 0; i < 7; ++i)
    store<std::int16_t>(buf, kDim + 2 * (i + 1),
                        static_cast<std::int16_t>(i < shape.size() ? shape[i] : 1));
  store<std::int16_t>(buf, kDatatype, static_cast<std::int16_t>(type));
  store<std::int16_t>(buf, kBitpix, static_cast<std::int16_t>(8 * bytes));
  const float pix[8] = {1.0f, static_cast<float>(spacing[0]), static_cast<float>(spacing[1]),
                        static_cast<float>(spacing[2]), 1.0f, 1.0f, 1.0f, 1.0f};
  for (std::size_t i = 0; i < 8; ++i) store<float>(buf, kPixdim + 4 * i, pix[i]);
  store<float>(buf, kVoxOffset, static_cast<float>(kDataOffset));
  store<float>(buf, kSclSlope, 0.0f);
  store<float>(buf, kSclInter, 0.0f);
  buf[kXyztUnits] = 2 | 8;  // mm, s
  store<std::int16_t>(buf, kSformCode, 1);
  for (std::size_t r = 0; r < 3; ++r) store<float>(buf, kSrowX + 16 * r + 4 * r, pix[r + 1]);
  std::memcpy(buf.data() + kMagic, "n+1\0", 4);

  std::vector<std::size_t> stride(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) stride[i - 1] = stride[i] * shape[i];
  std::vector<std::size_t> idx(shape.size(), 0);
  const auto v = data.data();
  unsigned char* p = buf.data() + kDataOffset;
  for (std::size_t f = 0; f < n; ++f, p += bytes) {
    std::size_t t = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) t += idx[a] * stride[a];
    const double x = v[t];
    switch (type) {
      case Datatype::int16: {
        const double r = std::nearbyint(x);
        if (!(r >= -32768.0 && r <= 32767.0))
          throw std::invalid_argument("nifti::write: value out of int16 range");
        const auto s = static_cast<std::int16_t>(r);
        std::memcpy(p, &s, 2);
        break;
      }
      case Datatype::float32: {
        const auto s = static_cast<float>(x);
        std::memcpy(p, &s, 4);
        break;
      }
      case Datatype::float64: std::memcpy(p, &x, 8); break;
    }
    for (std::size_t a = 0; a < idx.size(); ++a) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Error::Kind::io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(Error::Kind::io, "write failed for " + path.string());
}

}  // namespace drope::nifti
