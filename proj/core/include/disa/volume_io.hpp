#pragma once

#include "disa/volume.hpp"

#include <filesystem>

namespace disa {

/// NIfTI-1 voxel types supported for reading and writing.
enum class NiftiType : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Float32 = 16,
  Float64 = 64,
  UInt16 = 512,
};

/// Reads a single-file NIfTI-1 volume (.nii or .nii.gz).
///
/// Geometry comes from the sform when sform_code > 0, otherwise from the qform when
/// qform_code > 0, otherwise from pixdim alone. Voxels are converted to float with
/// scl_slope/scl_inter applied (a zero slope means "unscaled").
Volume load_nifti(const std::filesystem::path& path);

/// Writes NIfTI-1 with both sform and qform set; gzip when the name ends in ".gz".
/// Integer types store rounded values and reject data outside the type's range.
void save_nifti(const Volume& v, const std::filesystem::path& path, NiftiType type = NiftiType::Float32);

/// "DISAV1" container: 8-byte magic, dims u32x3, spacing f64x3, origin f64x3,
/// direction f64x9 (row-major), then raw f32 voxels x-fastest. All little-endian.
Volume load_disav1(const std::filesystem::path& path);
void save_disav1(const Volume& v, const std::filesystem::path& path);

/// Dispatches on the file's magic bytes (DISAV1) or extension (.nii/.nii.gz).
Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& v, const std::filesystem::path& path);

}  // namespace disa
