#include "disa/volume_io.hpp"

#include "binary.hpp"

#include <Eigen/LU>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace disa {

namespace detail {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::string magic(std::string_view tag) {
  std::string m(tag);
  m.resize(8, '\0');
  return m;
}

}  // namespace detail

namespace {

constexpr std::size_t kNiftiHeaderSize = 348;
constexpr std::size_t kNiftiDataOffset = 352;

bool has_gz_suffix(const std::filesystem::path& path) {
  const std::string s = path.string();
  return s.size() > 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

bool is_nifti_name(const std::filesystem::path& path) {
  std::string s = path.string();
  if (has_gz_suffix(path)) s.resize(s.size() - 3);
  return s.size() > 4 && s.compare(s.size() - 4, 4, ".nii") == 0;
}

// Reads a whole file through zlib, which passes uncompressed input through unchanged.
std::vector<char> read_maybe_gz(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw DataError("cannot open " + path.string());
  std::vector<char> bytes;
  std::array<char, 1 << 16> chunk{};
  for (;;) {
    const int n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(f);
      throw DataError("corrupt compressed stream in " + path.string());
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk.data(), chunk.data() + n);
  }
  gzclose(f);
  return bytes;
}

class HeaderView {
 public:
  HeaderView(const std::vector<char>& bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_.data() + offset, sizeof(T));
    if (swap_) {
      auto* p = reinterpret_cast<unsigned char*>(&v);
      std::reverse(p, p + sizeof(T));
    }
    return v;
  }

 private:
  const std::vector<char>& bytes_;
  bool swap_;
};

template <typename T>
T swapped(T v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  std::reverse(p, p + sizeof(T));
  return v;
}

template <typename Raw>
void convert_voxels(const char* src, std::size_t n, bool swap, double slope, double inter,
                    std::vector<float>& out) {
  for (std::size_t i = 0; i < n; ++i) {
    Raw r;
    std::memcpy(&r, src + i * sizeof(Raw), sizeof(Raw));
    if (swap) r = swapped(r);
    out[i] = static_cast<float>(static_cast<double>(r) * slope + inter);
  }
}

Mat3 quaternion_to_matrix(double b, double c, double d) {
  const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
  Mat3 r;
  r << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
      2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
      2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b;
  return r;
}

// Proper rotation -> (b, c, d) with a >= 0.
std::array<double, 3> matrix_to_quaternion(const Mat3& r) {
  double a = r(0, 0) + r(1, 1) + r(2, 2) + 1.0;
  double b, c, d;
  if (a > 0.5) {
    a = 0.5 * std::sqrt(a);
    b = 0.25 * (r(2, 1) - r(1, 2)) / a;
    c = 0.25 * (r(0, 2) - r(2, 0)) / a;
    d = 0.25 * (r(1, 0) - r(0, 1)) / a;
  } else {
    const double xd = 1.0 + r(0, 0) - (r(1, 1) + r(2, 2));
    const double yd = 1.0 + r(1, 1) - (r(0, 0) + r(2, 2));
    const double zd = 1.0 + r(2, 2) - (r(0, 0) + r(1, 1));
    if (xd > 1.0) {
      b = 0.5 * std::sqrt(xd);
      c = 0.25 * (r(0, 1) + r(1, 0)) / b;
      d = 0.25 * (r(0, 2) + r(2, 0)) / b;
      a = 0.25 * (r(2, 1) - r(1, 2)) / b;
    } else if (yd > 1.0) {
      c = 0.5 * std::sqrt(yd);
      b = 0.25 * (r(0, 1) + r(1, 0)) / c;
      d = 0.25 * (r(1, 2) + r(2, 1)) / c;
      a = 0.25 * (r(0, 2) - r(2, 0)) / c;
    } else {
      d = 0.5 * std::sqrt(zd);
      b = 0.25 * (r(0, 2) + r(2, 0)) / d;
      c = 0.25 * (r(1, 2) + r(2, 1)) / d;
      a = 0.25 * (r(1, 0) - r(0, 1)) / d;
    }
    if (a < 0.0) {
      b = -b;
      c = -c;
      d = -d;
    }
  }
  return {b, c, d};
}

std::size_t bytes_per_voxel(std::int16_t datatype) {
  switch (static_cast<NiftiType>(datatype)) {
    case NiftiType::UInt8: return 1;
    case NiftiType::Int16:
    case NiftiType::UInt16: return 2;
    case NiftiType::Float32: return 4;
    case NiftiType::Float64: return 8;
  }
  throw DataError("unsupported NIfTI datatype " + std::to_string(datatype));
}

}  // namespace

Volume load_nifti(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_maybe_gz(path);
  if (bytes.size() < kNiftiHeaderSize) throw DataError("malformed NIfTI header: file too short");

  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != 348) {
    if (swapped(sizeof_hdr) != 348) throw DataError("malformed NIfTI header: sizeof_hdr != 348");
    swap = true;
  }
  if (std::memcmp(bytes.data() + 344, "n+1", 4) != 0)
    throw DataError("malformed NIfTI header: expected single-file magic n+1");

  const HeaderView h(bytes, swap);
  const auto ndim = h.get<std::int16_t>(40);
  if (ndim != 3) throw DataError("NIfTI dim[0] must be 3, got " + std::to_string(ndim));
  Geometry g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = h.get<std::int16_t>(42 + 2 * a);
    if (g.dims[a] <= 0) throw DataError("malformed NIfTI header: non-positive dim");
  }
  const auto datatype = h.get<std::int16_t>(70);
  const std::size_t bpv = bytes_per_voxel(datatype);

  std::array<double, 4> pixdim{};
  for (int i = 0; i < 4; ++i) pixdim[i] = h.get<float>(76 + 4 * i);
  const auto vox_offset = static_cast<std::size_t>(h.get<float>(108));
  double slope = h.get<float>(112);
  double inter = h.get<float>(116);
  if (slope == 0.0 || !std::isfinite(slope)) {
    slope = 1.0;
    inter = 0.0;
  }
  if (!std::isfinite(inter)) inter = 0.0;

  const auto qform_code = h.get<std::int16_t>(252);
  const auto sform_code = h.get<std::int16_t>(254);
  if (sform_code > 0) {
    Eigen::Matrix<double, 3, 4> srow;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) srow(r, c) = h.get<float>(280 + 16 * r + 4 * c);
    for (int c = 0; c < 3; ++c) {
      const double len = srow.col(c).norm();
      if (!(len > 0.0)) throw DataError("malformed NIfTI header: degenerate sform");
      g.spacing[c] = len;
      g.direction.col(c) = srow.col(c) / len;
    }
    g.origin = srow.col(3);
  } else if (qform_code > 0) {
    const double qfac = pixdim[0] < 0.0 ? -1.0 : 1.0;
    g.direction = quaternion_to_matrix(h.get<float>(256), h.get<float>(260), h.get<float>(264));
    g.direction.col(2) *= qfac;
    for (int a = 0; a < 3; ++a) g.spacing[a] = std::abs(pixdim[a + 1]);
    g.origin = Vec3(h.get<float>(268), h.get<float>(272), h.get<float>(276));
  } else {
    for (int a = 0; a < 3; ++a) g.spacing[a] = std::abs(pixdim[a + 1]) > 0 ? std::abs(pixdim[a + 1]) : 1.0;
  }

  const std::size_t n = g.voxel_count();
  if (vox_offset < kNiftiHeaderSize || bytes.size() < vox_offset + n * bpv)
    throw DataError("truncated file");
  std::vector<float> data(n);
  const char* src = bytes.data() + vox_offset;
  switch (static_cast<NiftiType>(datatype)) {
    case NiftiType::UInt8: convert_voxels<std::uint8_t>(src, n, swap, slope, inter, data); break;
    case NiftiType::Int16: convert_voxels<std::int16_t>(src, n, swap, slope, inter, data); break;
    case NiftiType::UInt16: convert_voxels<std::uint16_t>(src, n, swap, slope, inter, data); break;
    case NiftiType::Float32: convert_voxels<float>(src, n, swap, slope, inter, data); break;
    case NiftiType::Float64: convert_voxels<double>(src, n, swap, slope, inter, data); break;
  }
  return Volume(std::move(g), std::move(data));
}

namespace {

template <typename T>
void put_at(std::vector<char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename Raw>
void encode_voxels(const Volume& v, std::vector<char>& buf) {
  const auto data = v.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    Raw r;
    if constexpr (std::is_integral_v<Raw>) {
      const double rounded = std::nearbyint(static_cast<double>(data[i]));
      if (!(rounded >= std::numeric_limits<Raw>::min() && rounded <= std::numeric_limits<Raw>::max()))
        throw DataError("voxel value out of range for the requested NIfTI datatype");
      r = static_cast<Raw>(rounded);
    } else {
      r = static_cast<Raw>(data[i]);
    }
    std::memcpy(buf.data() + kNiftiDataOffset + i * sizeof(Raw), &r, sizeof(Raw));
  }
}

}  // namespace

void save_nifti(const Volume& v, const std::filesystem::path& path, NiftiType type) {
  const Geometry& g = v.geometry();
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] > std::numeric_limits<std::int16_t>::max())
      throw DataError("volume too large for NIfTI-1");
  }
  const auto datatype = static_cast<std::int16_t>(type);
  const std::size_t bpv = bytes_per_voxel(datatype);
  std::vector<char> buf(kNiftiDataOffset + v.size() * bpv, '\0');

  put_at<std::int32_t>(buf, 0, 348);
  put_at<char>(buf, 38, 'r');
  put_at<std::int16_t>(buf, 40, 3);
  for (int a = 0; a < 3; ++a) put_at<std::int16_t>(buf, 42 + 2 * a, static_cast<std::int16_t>(g.dims[a]));
  for (int a = 3; a < 8; ++a) put_at<std::int16_t>(buf, 42 + 2 * a, 1);
  put_at<std::int16_t>(buf, 70, datatype);
  put_at<std::int16_t>(buf, 72, static_cast<std::int16_t>(8 * bpv));

  Mat3 rot = g.direction;
  float qfac = 1.0f;
  if (rot.determinant() < 0.0) {
    qfac = -1.0f;
    rot.col(2) *= -1.0;
  }
  put_at<float>(buf, 76, qfac);
  for (int a = 0; a < 3; ++a) put_at<float>(buf, 80 + 4 * a, static_cast<float>(g.spacing[a]));
  put_at<float>(buf, 108, static_cast<float>(kNiftiDataOffset));
  put_at<float>(buf, 112, 1.0f);
  put_at<float>(buf, 116, 0.0f);
  put_at<char>(buf, 123, 2);  // mm
  put_at<std::int16_t>(buf, 252, 1);
  put_at<std::int16_t>(buf, 254, 1);
  const auto q = matrix_to_quaternion(rot);
  for (int i = 0; i < 3; ++i) put_at<float>(buf, 256 + 4 * i, static_cast<float>(q[i]));
  for (int i = 0; i < 3; ++i) put_at<float>(buf, 268 + 4 * i, static_cast<float>(g.origin[i]));
  const Mat3 a = g.index_to_world_matrix();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) put_at<float>(buf, 280 + 16 * r + 4 * c, static_cast<float>(a(r, c)));
    put_at<float>(buf, 280 + 16 * r + 12, static_cast<float>(g.origin[r]));
  }
  std::memcpy(buf.data() + 344, "n+1", 4);

  switch (type) {
    case NiftiType::UInt8: encode_voxels<std::uint8_t>(v, buf); break;
    case NiftiType::Int16: encode_voxels<std::int16_t>(v, buf); break;
    case NiftiType::UInt16: encode_voxels<std::uint16_t>(v, buf); break;
    case NiftiType::Float32: encode_voxels<float>(v, buf); break;
    case NiftiType::Float64: encode_voxels<double>(v, buf); break;
  }

  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (f == nullptr) throw DataError("cannot write " + path.string());
    const int written = gzwrite(f, buf.data(), static_cast<unsigned>(buf.size()));
    gzclose(f);
    if (written != static_cast<int>(buf.size())) throw DataError("write failed for " + path.string());
  } else {
    detail::write_file(path, buf);
  }
}

namespace {
const std::string kVolumeMagic = detail::magic("DISAV1");
}

void save_disav1(const Volume& v, const std::filesystem::path& path) {
  const Geometry& g = v.geometry();
  detail::ByteWriter w;
  w.put_bytes(kVolumeMagic);
  for (int a = 0; a < 3; ++a) w.put(static_cast<std::uint32_t>(g.dims[a]));
  w.put_vec3(g.spacing);
  w.put_vec3(g.origin);
  w.put_mat3(g.direction);
  w.put_array(v.data());
  detail::write_file(path, w.bytes());
}

Volume load_disav1(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  if (r.get_string(8) != kVolumeMagic) throw DataError("not a DISAV1 file: bad magic");
  Geometry g;
  for (int a = 0; a < 3; ++a) {
    const auto d = r.get<std::uint32_t>();
    if (d == 0 || d > static_cast<std::uint32_t>(std::numeric_limits<int>::max()))
      throw DataError("DISAV1: invalid dims");
    g.dims[a] = static_cast<int>(d);
  }
  g.spacing = r.get_vec3();
  g.origin = r.get_vec3();
  g.direction = r.get_mat3();
  std::vector<float> data(g.voxel_count());
  r.get_array(std::span<float>(data));
  if (r.remaining() != 0) throw DataError("DISAV1: trailing bytes after voxel data");
  return Volume(std::move(g), std::move(data));
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string head(8, '\0');
  in.read(head.data(), 8);
  if (in.gcount() == 8 && head == kVolumeMagic) return load_disav1(path);
  if (is_nifti_name(path)) return load_nifti(path);
  throw DataError("unrecognised volume format: " + path.string());
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
  if (is_nifti_name(path)) {
    save_nifti(v, path);
  } else {
    save_disav1(v, path);
  }
}

}  // namespace disa
