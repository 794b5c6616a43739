#pragma once

#include "disa/transform.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace disa {

/// Transform JSON:
///   {"mode": "rigid|affine|rigid+probe",
///    "matrix": [16 numbers, row-major, linear part only],
///    "center": [x, y, z],
///    "deform": {"c": [x, y, z], "r": .., "R": .., "alpha": .., "beta": ..},   // rigid+probe only
///    "parameters": {...}}                                                     // informational
/// Lengths are millimetres and angles radians. "center" defaults to the origin on input.
std::string transform_to_json(const TransformChain& t);
TransformChain transform_from_json(std::string_view text);

void save_transform(const TransformChain& t, const std::filesystem::path& path);
TransformChain load_transform(const std::filesystem::path& path);

}  // namespace disa
