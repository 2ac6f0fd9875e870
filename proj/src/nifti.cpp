#include "mcseg/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

namespace mcseg {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

enum DataType : std::int16_t {
  DT_UINT8 = 2,
  DT_INT16 = 4,
  DT_INT32 = 8,
  DT_FLOAT32 = 16,
  DT_FLOAT64 = 64,
  DT_INT8 = 256,
  DT_UINT16 = 512,
  DT_UINT32 = 768,
};

bool is_gz(const std::filesystem::path& p) { return p.extension() == ".gz"; }

std::vector<char> read_all(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("missing file: " + path.string());
  // gzread transparently handles uncompressed input as well.
  std::unique_ptr<gzFile_s, decltype(&gzclose)> f(gzopen(path.c_str(), "rb"), &gzclose);
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<char> buf;
  std::array<char, 1 << 16> chunk;
  int n;
  while ((n = gzread(f.get(), chunk.data(), chunk.size())) > 0) buf.insert(buf.end(), chunk.data(), chunk.data() + n);
  if (n < 0) throw DataError("corrupt compressed stream: " + path.string());
  return buf;
}

void write_all(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (is_gz(path)) {
    std::unique_ptr<gzFile_s, decltype(&gzclose)> f(gzopen(path.c_str(), "wb6"), &gzclose);
    if (!f || gzwrite(f.get(), bytes.data(), static_cast<unsigned>(bytes.size())) !=
                  static_cast<int>(bytes.size()))
      throw DataError("cannot write " + path.string());
  } else {
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("cannot write " + path.string());
  }
}

template <typename T>
T load(const char* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <typename T>
void store(std::vector<char>& buf, std::size_t off, T v) {
  static_assert(std::endian::native == std::endian::little);
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

struct Header {
  Shape3 shape;
  Spacing spacing;
  std::int16_t datatype = 0;
  std::size_t offset = kVoxOffset;
  float slope = 0, inter = 0;
  bool swap = false;
};

Header parse_header(const std::vector<char>& buf, const std::filesystem::path& path) {
  if (buf.size() < kHeaderSize) throw DataError("truncated NIfTI header: " + path.string());
  Header h;
  const std::int32_t sz = load<std::int32_t>(buf.data(), false);
  if (sz != kHeaderSize) {
    if (load<std::int32_t>(buf.data(), true) != kHeaderSize)
      throw DataError("not a NIfTI-1 file: " + path.string());
    h.swap = true;
  }
  std::array<std::int16_t, 8> dim;
  for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(buf.data() + 40 + 2 * i, h.swap);
  int ndim = dim[0];
  while (ndim > 3 && dim[ndim] == 1) --ndim;  // trailing singleton dims are harmless
  if (ndim != 3 || dim[1] < 1 || dim[2] < 1 || dim[3] < 1)
    throw DataError("dimensionality error: expected a 3D image, " + path.string() + " has dim[0]=" +
                    std::to_string(dim[0]));
  h.shape = {dim[2], dim[1], dim[3]};
  std::array<float, 8> pix;
  for (int i = 0; i < 8; ++i) pix[i] = load<float>(buf.data() + 76 + 4 * i, h.swap);
  h.spacing = {std::abs(pix[2]), std::abs(pix[1]), std::abs(pix[3])};
  h.datatype = load<std::int16_t>(buf.data() + 70, h.swap);
  const float off = load<float>(buf.data() + 108, h.swap);
  h.offset = static_cast<std::size_t>(std::max(off, float(kHeaderSize)));
  h.slope = load<float>(buf.data() + 112, h.swap);
  h.inter = load<float>(buf.data() + 116, h.swap);
  return h;
}

template <typename T>
void decode(const std::vector<char>& buf, const Header& h, std::vector<float>& out) {
  const std::size_t n = h.shape.size();
  const char* p = buf.data() + h.offset;
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(load<T>(p + i * sizeof(T), h.swap));
}

std::size_t bytes_per_voxel(std::int16_t dt) {
  switch (dt) {
    case DT_UINT8:
    case DT_INT8: return 1;
    case DT_INT16:
    case DT_UINT16: return 2;
    case DT_INT32:
    case DT_UINT32:
    case DT_FLOAT32: return 4;
    case DT_FLOAT64: return 8;
    default: return 0;
  }
}

std::vector<char> make_header(const Shape3& s, const Spacing& sp, std::int16_t datatype,
                              std::int16_t bitpix) {
  std::vector<char> buf(kVoxOffset, 0);
  store<std::int32_t>(buf, 0, kHeaderSize);
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(s.cols),
                                        static_cast<std::int16_t>(s.rows),
                                        static_cast<std::int16_t>(s.slices), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<std::int16_t>(buf, 40 + 2 * i, dim[i]);
  store<std::int16_t>(buf, 70, datatype);
  store<std::int16_t>(buf, 72, bitpix);
  const std::array<float, 8> pix{1.0f, float(sp.col_mm), float(sp.row_mm), float(sp.slice_mm), 0, 0, 0, 0};
  for (int i = 0; i < 8; ++i) store<float>(buf, 76 + 4 * i, pix[i]);
  store<float>(buf, 108, float(kVoxOffset));
  store<float>(buf, 112, 0.0f);  // scl_slope 0 -> no scaling
  buf[123] = 2;                   // xyzt_units: mm
  store<std::int16_t>(buf, 252, 0);
  store<std::int16_t>(buf, 254, 0);
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  return buf;
}

}  // namespace

Volume read_nifti(const std::filesystem::path& path) {
  const auto buf = read_all(path);
  const Header h = parse_header(buf, path);
  const std::size_t bpv = bytes_per_voxel(h.datatype);
  if (bpv == 0)
    throw DataError("unsupported NIfTI datatype " + std::to_string(h.datatype) + ": " + path.string());
  if (buf.size() < h.offset + bpv * h.shape.size())
    throw DataError("truncated voxel data: " + path.string());
  Volume v{Grid3<float>(h.shape), h.spacing};
  auto& out = v.voxels.values();
  switch (h.datatype) {
    case DT_UINT8: decode<std::uint8_t>(buf, h, out); break;
    case DT_INT8: decode<std::int8_t>(buf, h, out); break;
    case DT_INT16: decode<std::int16_t>(buf, h, out); break;
    case DT_UINT16: decode<std::uint16_t>(buf, h, out); break;
    case DT_INT32: decode<std::int32_t>(buf, h, out); break;
    case DT_UINT32: decode<std::uint32_t>(buf, h, out); break;
    case DT_FLOAT32: decode<float>(buf, h, out); break;
    case DT_FLOAT64: decode<double>(buf, h, out); break;
  }
  if (h.slope != 0.0f && !(h.slope == 1.0f && h.inter == 0.0f))
    for (auto& x : out) x = x * h.slope + h.inter;
  return v;
}

void write_nifti(const std::filesystem::path& path, const Volume& v) {
  auto buf = make_header(v.shape(), v.spacing, DT_FLOAT32, 32);
  const auto& vals = v.voxels.values();
  const std::size_t off = buf.size();
  buf.resize(off + vals.size() * sizeof(float));
  std::memcpy(buf.data() + off, vals.data(), vals.size() * sizeof(float));
  write_all(path, buf);
}

void write_nifti_labels(const std::filesystem::path& path, const LabelMap& labels,
                        const Spacing& spacing) {
  auto buf = make_header(labels.shape(), spacing, DT_UINT8, 8);
  const auto& vals = labels.values();
  buf.insert(buf.end(), reinterpret_cast<const char*>(vals.data()),
             reinterpret_cast<const char*>(vals.data()) + vals.size());
  write_all(path, buf);
}

}  // namespace mcseg
