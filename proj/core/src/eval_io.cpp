#include "disa/eval.hpp"

#include <fstream>
#include <sstream>

namespace disa {

LandmarkSet load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmark file " + path.string());
  LandmarkSet points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    Vec3 p;
    char sep1 = 0, sep2 = 0;
    if (ss >> p[0] >> sep1 >> p[1] >> sep2 >> p[2] && sep1 == ',' && sep2 == ',') {
      std::string rest;
      ss >> rest;
      if (!rest.empty() && rest.find_first_not_of(" \t\r") != std::string::npos)
        throw DataError("landmark line " + std::to_string(line_no) + ": expected x,y,z");
      points.push_back(p);
      continue;
    }
    if (points.empty() && line_no == 1) continue;  // header
    throw DataError("landmark line " + std::to_string(line_no) + ": expected x,y,z");
  }
  if (points.empty()) throw DataError("landmark file " + path.string() + " holds no points");
  return points;
}

void save_landmarks(const LandmarkSet& points, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write landmark file " + path.string());
  out.precision(17);
  for (const Vec3& p : points) out << p[0] << ',' << p[1] << ',' << p[2] << '\n';
}

}  // namespace disa
