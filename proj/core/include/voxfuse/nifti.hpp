#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "voxfuse/volume.hpp"

namespace voxfuse {

// Supported subset of on-disk scalar types (values are NIfTI-1 datatype codes).
enum class NiftiDataType : std::int16_t {
    uint8 = 2,
    int16 = 4,
    int32 = 8,
    float32 = 16,
};

struct VolumeHeader {
    GridMeta meta;
    NiftiDataType dtype = NiftiDataType::float32;
    ElementKind kind = ElementKind::intensity;
    double scl_slope = 0.0;
    double scl_inter = 0.0;
};

// Single-file NIfTI-1 (.nii / .nii.gz), little-endian, 3D only.
// Honored header fields: dim, datatype, bitpix, pixdim, scl_slope/scl_inter,
// sform and qform codes and matrices. sform wins when both are set.
VolumeHeader read_volume_header(const std::filesystem::path& path);

VoxelGrid read_volume(const std::filesystem::path& path);

// Decodes integer data without a float round-trip and checks every value
// against num_classes.
LabelMap read_label_map(const std::filesystem::path& path, int num_classes);

// Decodes only the z-slab [z0, z1). The returned grid's affine is shifted so
// world coordinates agree with the full volume.
VoxelGrid read_subvolume(const std::filesystem::path& path, std::int64_t z0, std::int64_t z1);
Volume<std::int32_t> read_label_subvolume(const std::filesystem::path& path, int num_classes,
                                          std::int64_t z0, std::int64_t z1);

// Default on-disk type per element kind: label -> uint8 (int32 when values
// exceed 255), probability/uncertainty/intensity -> float32. Pass dtype to
// override; integer overrides require integral in-range values. Paths ending
// in .gz are gzip-compressed.
void write_volume(const VoxelGrid& grid, const std::filesystem::path& path,
                  std::optional<NiftiDataType> dtype = std::nullopt);
void write_label_map(const LabelMap& labels, const std::filesystem::path& path);

} // namespace voxfuse
