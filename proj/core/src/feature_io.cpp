#include "disa/feature_io.hpp"

#include "binary.hpp"

#include <limits>

namespace disa {

namespace {
const std::string kFeatureMagic = detail::magic("DISAF1");

std::uint32_t checked_u32(std::uint32_t v, const char* what) {
  if (v == 0 || v > static_cast<std::uint32_t>(std::numeric_limits<int>::max()))
    throw DataError(std::string("DISAF1: invalid ") + what);
  return v;
}
}  // namespace

void save_features(const FeatureMap& f, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.put_bytes(kFeatureMagic);
  for (int a = 0; a < 3; ++a) w.put(static_cast<std::uint32_t>(f.dims()[a]));
  w.put(static_cast<std::uint32_t>(f.channels()));
  w.put(static_cast<std::uint32_t>(f.stride()));
  const Geometry& g = f.source_geometry();
  for (int a = 0; a < 3; ++a) w.put(static_cast<std::uint32_t>(g.dims[a]));
  w.put_vec3(g.spacing);
  w.put_vec3(g.origin);
  w.put_mat3(g.direction);
  w.put(static_cast<std::uint8_t>(f.storage()));
  if (f.quantized()) {
    w.put(FeatureMap::kQuantScale);
    w.put_array(f.int8_values());
  } else {
    w.put(1.0f);
    w.put_array(f.float_values());
  }
  detail::write_file(path, w.bytes());
}

FeatureMap load_features(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  if (r.get_string(8) != kFeatureMagic) throw DataError("not a DISAF1 file: bad magic");
  Index3 dims;
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(checked_u32(r.get<std::uint32_t>(), "dims"));
  const int channels = static_cast<int>(checked_u32(r.get<std::uint32_t>(), "channel count"));
  const int stride = static_cast<int>(checked_u32(r.get<std::uint32_t>(), "stride"));
  Geometry g;
  for (int a = 0; a < 3; ++a) g.dims[a] = static_cast<int>(checked_u32(r.get<std::uint32_t>(), "source dims"));
  g.spacing = r.get_vec3();
  g.origin = r.get_vec3();
  g.direction = r.get_mat3();
  const auto storage = r.get<std::uint8_t>();
  const auto scale = r.get<float>();
  const std::size_t count = product(dims) * static_cast<std::size_t>(channels);
  if (storage == static_cast<std::uint8_t>(FeatureStorage::Float32)) {
    if (scale != 1.0f) throw DataError("DISAF1: float storage must have scale 1");
    std::vector<float> v(count);
    r.get_array(std::span<float>(v));
    if (r.remaining() != 0) throw DataError("DISAF1: trailing bytes");
    return FeatureMap(g, stride, dims, channels, std::move(v));
  }
  if (storage == static_cast<std::uint8_t>(FeatureStorage::Int8)) {
    if (scale != FeatureMap::kQuantScale) throw DataError("DISAF1: quantized storage must have scale 127");
    std::vector<std::int8_t> v(count);
    r.get_array(std::span<std::int8_t>(v));
    if (r.remaining() != 0) throw DataError("DISAF1: trailing bytes");
    return FeatureMap(g, stride, dims, channels, std::move(v));
  }
  throw DataError("DISAF1: unknown storage tag");
}

}  // namespace disa
