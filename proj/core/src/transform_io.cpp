#include "disa/transform_io.hpp"

#include "binary.hpp"

#include <nlohmann/json.hpp>

namespace disa {

using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 json_vec(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw DataError(std::string("transform JSON: '") + what + "' must have 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

std::string transform_to_json(const TransformChain& t) {
  json j;
  j["mode"] = std::string(to_string(t.mode()));
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = t.linear_matrix();
  m.topRightCorner<3, 1>() = t.linear_offset();
  json matrix = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) matrix.push_back(m(r, c));
  j["matrix"] = matrix;
  j["center"] = vec_json(t.center());

  json params;
  params["translation_mm"] = vec_json(t.translation());
  if (t.mode() == TransformMode::Affine) {
    json a = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) a.push_back(t.linear_matrix()(r, c));
    params["matrix_row_major"] = a;
  } else {
    params["rotation_rad"] = vec_json(t.angles());
  }
  if (const auto& p = t.probe()) {
    j["deform"] = {{"c", vec_json(p->center)}, {"r", p->inner_radius}, {"R", p->outer_radius},
                   {"alpha", p->alpha}, {"beta", p->beta}};
  }
  j["parameters"] = params;
  j["units"] = {{"length", "mm"}, {"angle", "rad"}};
  return j.dump(2);
}

TransformChain transform_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("transform JSON: ") + e.what());
  }
  try {
    const TransformMode mode = parse_transform_mode(j.at("mode").get<std::string>());
    const json& mj = j.at("matrix");
    if (!mj.is_array() || mj.size() != 16) throw DataError("transform JSON: 'matrix' must have 16 numbers");
    Mat4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = mj[static_cast<std::size_t>(4 * r + c)].get<double>();
    const Vec3 center = j.contains("center") ? json_vec(j["center"], "center") : Vec3::Zero();
    std::optional<ProbeDeform> probe;
    if (mode == TransformMode::RigidProbe) {
      const json& d = j.at("deform");
      ProbeDeform p;
      p.center = json_vec(d.at("c"), "deform.c");
      p.inner_radius = d.at("r").get<double>();
      p.outer_radius = d.at("R").get<double>();
      p.alpha = d.value("alpha", 0.0);
      p.beta = d.value("beta", 0.0);
      p.validate();
      probe = p;
    }
    return TransformChain::from_matrix(m, mode, center, probe);
  } catch (const json::exception& e) {
    throw DataError(std::string("transform JSON: ") + e.what());
  }
}

void save_transform(const TransformChain& t, const std::filesystem::path& path) {
  const std::string text = transform_to_json(t) + "\n";
  detail::write_file(path, text);
}

TransformChain load_transform(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_file(path);
  return transform_from_json(std::string_view(bytes.data(), bytes.size()));
}

}  // namespace disa
