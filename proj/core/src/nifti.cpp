#include "voxfuse/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

namespace voxfuse {

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
    std::int32_t sizeof_hdr;    // must be 348
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1;
    float intent_p2;
    float intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max;
    float cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax;
    std::int32_t glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b;
    float quatern_c;
    float quatern_d;
    float qoffset_x;
    float qoffset_y;
    float qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4]; // "n+1\0" for single-file
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kIntentLabel = 1002; // NIFTI_INTENT_LABEL
constexpr char kUnitsMm = 2;                // NIFTI_UNITS_MM

int bytes_per(NiftiDataType dtype) {
    switch (dtype) {
        case NiftiDataType::uint8: return 1;
        case NiftiDataType::int16: return 2;
        case NiftiDataType::int32: return 4;
        case NiftiDataType::float32: return 4;
    }
    return 0;
}

NiftiDataType parse_dtype(std::int16_t code, const std::filesystem::path& path) {
    switch (code) {
        case 2: return NiftiDataType::uint8;
        case 4: return NiftiDataType::int16;
        case 8: return NiftiDataType::int32;
        case 16: return NiftiDataType::float32;
        default:
            fail(ErrorCode::unsupported_format,
                 path.string() + ": unsupported NIfTI datatype code " + std::to_string(code));
    }
}

// gzread handles both gzip streams and plain files.
class InputFile {
public:
    explicit InputFile(const std::filesystem::path& path) : path_(path) {
        std::error_code ec;
        if (!std::filesystem::exists(path, ec))
            fail(ErrorCode::input_missing, path.string() + ": no such file");
        file_ = gzopen(path.string().c_str(), "rb");
        if (!file_) fail(ErrorCode::io_error, path.string() + ": cannot open for reading");
    }

    ~InputFile() {
        if (file_) gzclose(file_);
    }

    InputFile(const InputFile&) = delete;
    InputFile& operator=(const InputFile&) = delete;

    void read_exact(void* out, std::size_t n) {
        std::size_t done = 0;
        auto* dst = static_cast<unsigned char*>(out);
        while (done < n) {
            const unsigned step =
                static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
            const int got = gzread(file_, dst + done, step);
            if (got <= 0)
                fail(ErrorCode::corrupt_input, path_.string() + ": truncated file");
            done += static_cast<std::size_t>(got);
        }
    }

    void seek(std::int64_t offset) {
        if (gzseek(file_, static_cast<z_off_t>(offset), SEEK_SET) < 0)
            fail(ErrorCode::corrupt_input, path_.string() + ": truncated file (seek failed)");
    }

private:
    std::filesystem::path path_;
    gzFile file_ = nullptr;
};

Affine4 affine_from_qform(const Nifti1Header& h) {
    const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    const double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;

    Mat3 r;
    r.m = {{{a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c},
            {2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d, 2 * c * d - 2 * a * b},
            {2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a + d * d - c * c - b * b}}};

    Affine4 out = Affine4::identity();
    for (int i = 0; i < 3; ++i) {
        out.m[i][0] = r.m[i][0] * h.pixdim[1];
        out.m[i][1] = r.m[i][1] * h.pixdim[2];
        out.m[i][2] = r.m[i][2] * h.pixdim[3] * qfac;
    }
    out.m[0][3] = h.qoffset_x;
    out.m[1][3] = h.qoffset_y;
    out.m[2][3] = h.qoffset_z;
    return out;
}

struct ParsedHeader {
    VolumeHeader info;
    std::int64_t data_offset = 0;
};

ParsedHeader parse_header(const Nifti1Header& h, const std::filesystem::path& path) {
    if (h.sizeof_hdr != 348) {
        std::string hint;
        std::int32_t swapped = h.sizeof_hdr;
        auto* bytes = reinterpret_cast<unsigned char*>(&swapped);
        std::reverse(bytes, bytes + 4);
        if (swapped == 348) hint = " (big-endian files are not supported)";
        fail(ErrorCode::unsupported_format,
             path.string() + ": not a NIfTI-1 header, sizeof_hdr=" +
                 std::to_string(h.sizeof_hdr) + hint);
    }
    if (std::memcmp(h.magic, "n+1", 3) != 0) {
        if (std::memcmp(h.magic, "ni1", 3) == 0)
            fail(ErrorCode::unsupported_format,
                 path.string() + ": two-file NIfTI (.hdr/.img) is not supported");
        fail(ErrorCode::unsupported_format, path.string() + ": bad NIfTI magic");
    }

    const int ndim = h.dim[0];
    if (ndim < 1 || ndim > 7)
        fail(ErrorCode::corrupt_input, path.string() + ": invalid dim[0]");
    for (int i = 4; i <= ndim; ++i)
        if (h.dim[i] > 1)
            fail(ErrorCode::unsupported_format,
                 path.string() + ": only 3D volumes are supported (dim[" + std::to_string(i) +
                     "]=" + std::to_string(h.dim[i]) + ")");

    ParsedHeader parsed;
    VolumeHeader& info = parsed.info;
    info.dtype = parse_dtype(h.datatype, path);
    if (h.bitpix != 8 * bytes_per(info.dtype))
        fail(ErrorCode::corrupt_input,
             path.string() + ": bitpix " + std::to_string(h.bitpix) +
                 " inconsistent with datatype");

    info.meta.dims = {h.dim[1], ndim >= 2 ? h.dim[2] : 1, ndim >= 3 ? h.dim[3] : 1};
    if (info.meta.dims.nx <= 0 || info.meta.dims.ny <= 0 || info.meta.dims.nz <= 0)
        fail(ErrorCode::corrupt_input, path.string() + ": non-positive dimension");

    for (int i = 0; i < 3; ++i) {
        const float p = h.pixdim[i + 1];
        if (!(p > 0.0f) || !std::isfinite(p))
            fail(ErrorCode::corrupt_input, path.string() + ": non-positive pixdim");
        info.meta.spacing[i] = p;
    }

    if (h.sform_code > 0) {
        info.meta.affine = Affine4::identity();
        for (int j = 0; j < 4; ++j) {
            info.meta.affine.m[0][j] = h.srow_x[j];
            info.meta.affine.m[1][j] = h.srow_y[j];
            info.meta.affine.m[2][j] = h.srow_z[j];
        }
    } else if (h.qform_code > 0) {
        info.meta.affine = affine_from_qform(h);
    } else {
        info.meta.affine = Affine4::from_spacing(info.meta.spacing);
    }
    if (std::abs(info.meta.affine.det3()) <= 1e-12)
        fail(ErrorCode::corrupt_input, path.string() + ": singular voxel-to-world affine");

    info.scl_slope = std::isfinite(h.scl_slope) ? h.scl_slope : 0.0;
    info.scl_inter = std::isfinite(h.scl_inter) ? h.scl_inter : 0.0;

    if (h.intent_code == kIntentLabel || std::strncmp(h.intent_name, "label", 16) == 0)
        info.kind = ElementKind::label;
    else if (std::strncmp(h.intent_name, "probability", 16) == 0)
        info.kind = ElementKind::probability;
    else if (std::strncmp(h.intent_name, "uncertainty", 16) == 0)
        info.kind = ElementKind::uncertainty;
    else
        info.kind = ElementKind::intensity;

    parsed.data_offset = static_cast<std::int64_t>(h.vox_offset);
    if (parsed.data_offset < 348)
        fail(ErrorCode::corrupt_input, path.string() + ": vox_offset before end of header");
    return parsed;
}

ParsedHeader read_parsed_header(InputFile& in, const std::filesystem::path& path) {
    Nifti1Header h;
    in.read_exact(&h, sizeof(h));
    return parse_header(h, path);
}

bool scaling_active(const VolumeHeader& info) {
    return info.scl_slope != 0.0 && !(info.scl_slope == 1.0 && info.scl_inter == 0.0);
}

void decode_to_float(const unsigned char* raw, std::size_t count, const VolumeHeader& info,
                     float* out) {
    const bool scale = scaling_active(info);
    const double slope = info.scl_slope, inter = info.scl_inter;
    auto emit = [&](std::size_t i, double v) {
        out[i] = scale ? static_cast<float>(v * slope + inter) : static_cast<float>(v);
    };
    switch (info.dtype) {
        case NiftiDataType::uint8:
            for (std::size_t i = 0; i < count; ++i) emit(i, raw[i]);
            break;
        case NiftiDataType::int16: {
            std::vector<std::int16_t> tmp(count);
            std::memcpy(tmp.data(), raw, count * 2);
            for (std::size_t i = 0; i < count; ++i) emit(i, tmp[i]);
            break;
        }
        case NiftiDataType::int32: {
            std::vector<std::int32_t> tmp(count);
            std::memcpy(tmp.data(), raw, count * 4);
            for (std::size_t i = 0; i < count; ++i) emit(i, tmp[i]);
            break;
        }
        case NiftiDataType::float32: {
            if (!scale) {
                std::memcpy(out, raw, count * 4);
            } else {
                std::vector<float> tmp(count);
                std::memcpy(tmp.data(), raw, count * 4);
                for (std::size_t i = 0; i < count; ++i) emit(i, tmp[i]);
            }
            break;
        }
    }
}

void decode_to_int32(const unsigned char* raw, std::size_t count, const VolumeHeader& info,
                     const std::filesystem::path& path, std::int32_t* out) {
    const bool scale = scaling_active(info);
    auto emit = [&](std::size_t i, double v) {
        if (scale) v = v * info.scl_slope + info.scl_inter;
        const double r = std::rint(v);
        if (std::abs(v - r) > 1e-6)
            fail(ErrorCode::corrupt_input,
                 path.string() + ": non-integral label value " + std::to_string(v));
        out[i] = static_cast<std::int32_t>(r);
    };
    switch (info.dtype) {
        case NiftiDataType::uint8:
            for (std::size_t i = 0; i < count; ++i) emit(i, raw[i]);
            break;
        case NiftiDataType::int16: {
            std::vector<std::int16_t> tmp(count);
            std::memcpy(tmp.data(), raw, count * 2);
            for (std::size_t i = 0; i < count; ++i) emit(i, tmp[i]);
            break;
        }
        case NiftiDataType::int32: {
            if (!scale) {
                std::memcpy(out, raw, count * 4);
            } else {
                std::vector<std::int32_t> tmp(count);
                std::memcpy(tmp.data(), raw, count * 4);
                for (std::size_t i = 0; i < count; ++i) emit(i, tmp[i]);
            }
            break;
        }
        case NiftiDataType::float32: {
            std::vector<float> tmp(count);
            std::memcpy(tmp.data(), raw, count * 4);
            for (std::size_t i = 0; i < count; ++i) emit(i, tmp[i]);
            break;
        }
    }
}

std::vector<unsigned char> read_raw_slab(InputFile& in, const ParsedHeader& parsed,
                                         std::int64_t z0, std::int64_t z1,
                                         const std::filesystem::path& path) {
    const Dims& dims = parsed.info.meta.dims;
    if (z0 < 0 || z1 <= z0 || z1 > dims.nz)
        fail(ErrorCode::invalid_argument, path.string() + ": slab range out of bounds");
    const std::int64_t item = bytes_per(parsed.info.dtype);
    const std::int64_t plane = dims.nx * dims.ny * item;
    std::vector<unsigned char> raw(static_cast<std::size_t>(plane * (z1 - z0)));
    in.seek(parsed.data_offset + z0 * plane);
    in.read_exact(raw.data(), raw.size());
    return raw;
}

GridMeta slab_meta(const GridMeta& full, std::int64_t z0, std::int64_t z1) {
    GridMeta meta = full;
    meta.dims.nz = z1 - z0;
    for (int i = 0; i < 3; ++i)
        meta.affine.m[i][3] += static_cast<double>(z0) * meta.affine.m[i][2];
    return meta;
}

// --- writing ---------------------------------------------------------------

bool integral_in_range(const VoxelGrid& grid, double lo, double hi) {
    for (float v : grid.values()) {
        const double d = v;
        if (d < lo || d > hi || d != std::rint(d)) return false;
    }
    return true;
}

NiftiDataType choose_dtype(const VoxelGrid& grid) {
    switch (grid.kind()) {
        case ElementKind::label:
            if (!integral_in_range(grid, 0.0, 2147483647.0))
                fail(ErrorCode::invalid_argument, "label grid holds non-integral values");
            return integral_in_range(grid, 0.0, 255.0) ? NiftiDataType::uint8
                                                       : NiftiDataType::int32;
        case ElementKind::probability:
        case ElementKind::uncertainty:
        case ElementKind::intensity:
            return NiftiDataType::float32;
    }
    return NiftiDataType::float32;
}

void check_representable(const VoxelGrid& grid, NiftiDataType dtype) {
    switch (dtype) {
        case NiftiDataType::uint8:
            if (!integral_in_range(grid, 0.0, 255.0))
                fail(ErrorCode::invalid_argument, "values do not fit uint8");
            break;
        case NiftiDataType::int16:
            if (!integral_in_range(grid, -32768.0, 32767.0))
                fail(ErrorCode::invalid_argument, "values do not fit int16");
            break;
        case NiftiDataType::int32:
            if (!integral_in_range(grid, -2147483648.0, 2147483647.0))
                fail(ErrorCode::invalid_argument, "values do not fit int32");
            break;
        case NiftiDataType::float32:
            break;
    }
}

Nifti1Header make_header(const GridMeta& meta, ElementKind kind, NiftiDataType dtype) {
    Nifti1Header h;
    std::memset(&h, 0, sizeof(h));
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(meta.dims.nx);
    h.dim[2] = static_cast<std::int16_t>(meta.dims.ny);
    h.dim[3] = static_cast<std::int16_t>(meta.dims.nz);
    for (int i = 4; i < 8; ++i) h.dim[i] = 1;
    h.datatype = static_cast<std::int16_t>(dtype);
    h.bitpix = static_cast<std::int16_t>(8 * bytes_per(dtype));
    h.pixdim[0] = 1.0f;
    for (int i = 0; i < 3; ++i) h.pixdim[i + 1] = static_cast<float>(meta.spacing[i]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = kUnitsMm;
    std::strncpy(h.descrip, "voxfuse", sizeof(h.descrip) - 1);
    // sform preferred over qform: record the affine there and leave qform off
    h.qform_code = 0;
    h.sform_code = 1;
    for (int j = 0; j < 4; ++j) {
        h.srow_x[j] = static_cast<float>(meta.affine.m[0][j]);
        h.srow_y[j] = static_cast<float>(meta.affine.m[1][j]);
        h.srow_z[j] = static_cast<float>(meta.affine.m[2][j]);
    }
    switch (kind) {
        case ElementKind::label:
            h.intent_code = kIntentLabel;
            std::strncpy(h.intent_name, "label", sizeof(h.intent_name) - 1);
            break;
        case ElementKind::probability:
            std::strncpy(h.intent_name, "probability", sizeof(h.intent_name) - 1);
            break;
        case ElementKind::uncertainty:
            std::strncpy(h.intent_name, "uncertainty", sizeof(h.intent_name) - 1);
            break;
        case ElementKind::intensity:
            break;
    }
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

bool has_gz_suffix(const std::filesystem::path& path) {
    const std::string s = path.string();
    return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

void write_file(const std::filesystem::path& path, const Nifti1Header& header,
                const unsigned char* data, std::size_t data_size) {
    const char pad[4] = {0, 0, 0, 0}; // no header extensions
    if (has_gz_suffix(path)) {
        gzFile f = gzopen(path.string().c_str(), "wb6");
        if (!f) fail(ErrorCode::io_error, path.string() + ": cannot open for writing");
        bool ok = gzwrite(f, &header, sizeof(header)) == static_cast<int>(sizeof(header)) &&
                  gzwrite(f, pad, 4) == 4;
        std::size_t done = 0;
        while (ok && done < data_size) {
            const unsigned step =
                static_cast<unsigned>(std::min<std::size_t>(data_size - done, 1u << 30));
            ok = gzwrite(f, data + done, step) == static_cast<int>(step);
            done += step;
        }
        const bool closed = gzclose(f) == Z_OK;
        if (!ok || !closed) fail(ErrorCode::io_error, path.string() + ": write failed");
    } else {
        std::FILE* f = std::fopen(path.string().c_str(), "wb");
        if (!f) fail(ErrorCode::io_error, path.string() + ": cannot open for writing");
        bool ok = std::fwrite(&header, sizeof(header), 1, f) == 1 &&
                  std::fwrite(pad, 1, 4, f) == 4 &&
                  (data_size == 0 || std::fwrite(data, 1, data_size, f) == data_size);
        if (std::fclose(f) != 0) ok = false;
        if (!ok) fail(ErrorCode::io_error, path.string() + ": write failed");
    }
}

template <class T>
std::vector<unsigned char> encode(std::span<const float> values) {
    std::vector<unsigned char> raw(values.size() * sizeof(T));
    auto* out = reinterpret_cast<T*>(raw.data());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<T>(values[i]);
    return raw;
}

} // namespace

VolumeHeader read_volume_header(const std::filesystem::path& path) {
    InputFile in(path);
    return read_parsed_header(in, path).info;
}

VoxelGrid read_volume(const std::filesystem::path& path) {
    InputFile in(path);
    const ParsedHeader parsed = read_parsed_header(in, path);
    const auto raw = read_raw_slab(in, parsed, 0, parsed.info.meta.dims.nz, path);
    std::vector<float> data(static_cast<std::size_t>(parsed.info.meta.dims.voxel_count()));
    decode_to_float(raw.data(), data.size(), parsed.info, data.data());
    return VoxelGrid(parsed.info.meta, parsed.info.kind, std::move(data));
}

VoxelGrid read_subvolume(const std::filesystem::path& path, std::int64_t z0, std::int64_t z1) {
    InputFile in(path);
    const ParsedHeader parsed = read_parsed_header(in, path);
    const auto raw = read_raw_slab(in, parsed, z0, z1, path);
    const GridMeta meta = slab_meta(parsed.info.meta, z0, z1);
    std::vector<float> data(static_cast<std::size_t>(meta.dims.voxel_count()));
    decode_to_float(raw.data(), data.size(), parsed.info, data.data());
    return VoxelGrid(meta, parsed.info.kind, std::move(data));
}

LabelMap read_label_map(const std::filesystem::path& path, int num_classes) {
    InputFile in(path);
    const ParsedHeader parsed = read_parsed_header(in, path);
    const auto raw = read_raw_slab(in, parsed, 0, parsed.info.meta.dims.nz, path);
    std::vector<std::int32_t> data(static_cast<std::size_t>(parsed.info.meta.dims.voxel_count()));
    decode_to_int32(raw.data(), data.size(), parsed.info, path, data.data());
    return LabelMap(Volume<std::int32_t>(parsed.info.meta, ElementKind::label, std::move(data)),
                    num_classes);
}

Volume<std::int32_t> read_label_subvolume(const std::filesystem::path& path, int num_classes,
                                          std::int64_t z0, std::int64_t z1) {
    InputFile in(path);
    const ParsedHeader parsed = read_parsed_header(in, path);
    const auto raw = read_raw_slab(in, parsed, z0, z1, path);
    const GridMeta meta = slab_meta(parsed.info.meta, z0, z1);
    std::vector<std::int32_t> data(static_cast<std::size_t>(meta.dims.voxel_count()));
    decode_to_int32(raw.data(), data.size(), parsed.info, path, data.data());
    for (std::int32_t v : data)
        if (v < 0 || v >= num_classes)
            fail(ErrorCode::corrupt_input,
                 path.string() + ": label value " + std::to_string(v) + " outside [0, " +
                     std::to_string(num_classes) + ")");
    return Volume<std::int32_t>(meta, ElementKind::label, std::move(data));
}

void write_volume(const VoxelGrid& grid, const std::filesystem::path& path,
                  std::optional<NiftiDataType> dtype) {
    if (grid.dims().nx > 32767 || grid.dims().ny > 32767 || grid.dims().nz > 32767)
        fail(ErrorCode::invalid_argument, "dimensions exceed the NIfTI-1 dim field range");
    const NiftiDataType chosen = dtype ? *dtype : choose_dtype(grid);
    if (dtype) check_representable(grid, chosen);

    const Nifti1Header header = make_header(grid.meta(), grid.kind(), chosen);
    std::vector<unsigned char> raw;
    switch (chosen) {
        case NiftiDataType::uint8: raw = encode<std::uint8_t>(grid.values()); break;
        case NiftiDataType::int16: raw = encode<std::int16_t>(grid.values()); break;
        case NiftiDataType::int32: raw = encode<std::int32_t>(grid.values()); break;
        case NiftiDataType::float32: {
            raw.resize(grid.values().size() * 4);
            std::memcpy(raw.data(), grid.values().data(), raw.size());
            break;
        }
    }
    write_file(path, header, raw.data(), raw.size());
}

void write_label_map(const LabelMap& labels, const std::filesystem::path& path) {
    const bool small = labels.num_classes() <= 256;
    const NiftiDataType dtype = small ? NiftiDataType::uint8 : NiftiDataType::int32;
    const Nifti1Header header = make_header(labels.meta(), ElementKind::label, dtype);

    const auto values = labels.values();
    std::vector<unsigned char> raw;
    if (small) {
        raw.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            raw[i] = static_cast<std::uint8_t>(values[i]);
    } else {
        raw.resize(values.size() * 4);
        std::memcpy(raw.data(), values.data(), raw.size());
    }
    write_file(path, header, raw.data(), raw.size());
}

} // namespace voxfuse
