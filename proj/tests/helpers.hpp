#pragma once

// Shared fixtures and independent oracles for the test suites. Oracles are
// deliberately naive (explicit sets, brute-force tallies, direct sorts) and
// never call the code paths they check.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "voxfuse/rng.hpp"
#include "voxfuse/volume.hpp"

namespace testutil {

namespace fs = std::filesystem;
using voxfuse::Dims;
using voxfuse::ElementKind;
using voxfuse::GridMeta;
using voxfuse::LabelMap;
using voxfuse::Rng;
using voxfuse::Volume;
using voxfuse::VoxelGrid;

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const int id = counter.fetch_add(1);
        path_ = fs::temp_directory_path() /
                ("voxfuse-test-" + std::to_string(::getpid()) + "-" + std::to_string(id));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline GridMeta make_meta(Dims dims, double spacing = 1.0) {
    GridMeta meta;
    meta.dims = dims;
    meta.spacing = {spacing, spacing, spacing};
    meta.affine = voxfuse::Affine4::from_spacing(meta.spacing);
    return meta;
}

inline LabelMap random_labels(Dims dims, int num_classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::int32_t> data(static_cast<std::size_t>(dims.voxel_count()));
    for (auto& v : data)
        v = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint32_t>(num_classes)));
    return LabelMap(Volume<std::int32_t>(make_meta(dims), ElementKind::label, std::move(data)),
                    num_classes);
}

// float-representable values so NIfTI float32 storage is lossless
inline VoxelGrid random_grid(Dims dims, ElementKind kind, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> data(static_cast<std::size_t>(dims.voxel_count()));
    switch (kind) {
        case ElementKind::label:
            for (auto& v : data) v = static_cast<float>(rng.next_below(200));
            break;
        case ElementKind::intensity:
            for (auto& v : data) v = static_cast<float>(rng.next_in(-1024, 3000));
            break;
        case ElementKind::probability:
            for (auto& v : data) v = static_cast<float>(rng.next_unit());
            break;
        case ElementKind::uncertainty:
            for (auto& v : data) v = static_cast<float>(rng.next_unit()) * 0.25f;
            break;
    }
    return VoxelGrid(make_meta(dims), kind, std::move(data));
}

// dense probability planes with per-voxel sum exactly 1 (last plane absorbs
// the rounding remainder)
inline std::vector<float> random_probability_planes(Dims dims, int num_classes,
                                                    std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t count = static_cast<std::size_t>(dims.voxel_count());
    std::vector<float> planes(count * static_cast<std::size_t>(num_classes));
    for (std::size_t v = 0; v < count; ++v) {
        std::vector<double> raw(static_cast<std::size_t>(num_classes));
        double sum = 0.0;
        for (auto& r : raw) {
            r = rng.next_unit() + 1e-3;
            sum += r;
        }
        float acc = 0.0f;
        for (int l = 0; l < num_classes; ++l) {
            const float p = l + 1 == num_classes
                                ? std::max(0.0f, 1.0f - acc)
                                : static_cast<float>(raw[static_cast<std::size_t>(l)] / sum);
            planes[static_cast<std::size_t>(l) * count + v] = p;
            acc += p;
        }
    }
    return planes;
}

template <class T>
bool data_equal(const Volume<T>& a, const Volume<T>& b) {
    if (!(a.dims() == b.dims())) return false;
    const auto av = a.values();
    const auto bv = b.values();
    return std::equal(av.begin(), av.end(), bv.begin());
}

inline bool labels_equal(const LabelMap& a, const LabelMap& b) {
    return a.num_classes() == b.num_classes() && data_equal(a.grid(), b.grid());
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

// ---- independent oracles ----------------------------------------------------

// mode of a vote multiset, ties to the lowest label
inline std::int32_t oracle_mode(const std::vector<std::int32_t>& votes, int num_classes) {
    std::int32_t best = 0;
    std::int64_t best_count = -1;
    for (std::int32_t c = 0; c < num_classes; ++c) {
        const std::int64_t count = std::count(votes.begin(), votes.end(), c);
        if (count > best_count) {
            best_count = count;
            best = c;
        }
    }
    return best;
}

// population variance of one label's indicator over the members at one voxel
inline double oracle_onehot_variance(const std::vector<std::int32_t>& votes, std::int32_t label) {
    const double n = static_cast<double>(votes.size());
    double mean = 0.0;
    for (std::int32_t v : votes) mean += v == label ? 1.0 : 0.0;
    mean /= n;
    double m2 = 0.0;
    for (std::int32_t v : votes) {
        const double x = v == label ? 1.0 : 0.0;
        m2 += (x - mean) * (x - mean);
    }
    return m2 / n;
}

// sort + linear interpolation, written independently of percentile()
inline double oracle_percentile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] * (1.0 - (pos - static_cast<double>(lo))) +
           values[lo + 1] * (pos - static_cast<double>(lo));
}

// explicit voxel-index sets per class
struct OracleDsc {
    double dsc;
    std::int64_t gt_voxels;
    std::int64_t pred_voxels;
};

inline OracleDsc oracle_dsc(const LabelMap& pred, const LabelMap& gt, std::int32_t label) {
    std::set<std::int64_t> p, g;
    const auto pv = pred.values();
    const auto gv = gt.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv[i] == label) p.insert(static_cast<std::int64_t>(i));
        if (gv[i] == label) g.insert(static_cast<std::int64_t>(i));
    }
    std::vector<std::int64_t> inter;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(inter));
    OracleDsc out{0.0, static_cast<std::int64_t>(g.size()), static_cast<std::int64_t>(p.size())};
    if (!p.empty() || !g.empty())
        out.dsc = 2.0 * static_cast<double>(inter.size()) /
                  static_cast<double>(p.size() + g.size());
    return out;
}

} // namespace testutil
