#pragma once

#include "disa/features.hpp"

#include <filesystem>

namespace disa {

/// "DISAF1" feature file, little-endian:
///   magic[8] | dims u32x3 | channels u32 | stride u32 |
///   source dims u32x3 | source spacing f64x3 | source origin f64x3 | source direction f64x9 |
///   storage u8 (0 = f32, 1 = i8) | scale f32 (1 or 127) | values, channel-fastest
void save_features(const FeatureMap& f, const std::filesystem::path& path);
FeatureMap load_features(const std::filesystem::path& path);

}  // namespace disa
