#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace voxfuse {

struct Dims {
    std::int64_t nx = 0;
    std::int64_t ny = 0;
    std::int64_t nz = 0;

    std::int64_t voxel_count() const { return nx * ny * nz; }
    bool operator==(const Dims&) const = default;
};

// Physical voxel size in millimetres per axis.
using Spacing = std::array<double, 3>;

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }

struct Mat3 {
    // row-major
    std::array<std::array<double, 3>, 3> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
        return r;
    }

    double det() const {
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
             - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
             + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }

    // Caller is responsible for checking det() against the invertibility
    // threshold before relying on the result.
    Mat3 inverse() const {
        const double d = det();
        Mat3 r;
        r.m[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
        r.m[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
        r.m[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
        r.m[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d;
        r.m[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
        r.m[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
        r.m[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d;
        r.m[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d;
        r.m[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
        return r;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }

    Mat3 operator*(const Mat3& b) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r.m[i][j] = m[i][0] * b.m[0][j] + m[i][1] * b.m[1][j] + m[i][2] * b.m[2][j];
        return r;
    }
};

// Voxel-index-to-world affine, homogeneous 4x4 with last row (0,0,0,1).
struct Affine4 {
    std::array<std::array<double, 4>, 4> m{};

    static Affine4 identity() {
        Affine4 a;
        for (int i = 0; i < 4; ++i) a.m[i][i] = 1.0;
        return a;
    }

    static Affine4 from_spacing(const Spacing& s) {
        Affine4 a = identity();
        a.m[0][0] = s[0];
        a.m[1][1] = s[1];
        a.m[2][2] = s[2];
        return a;
    }

    Vec3 apply(const Vec3& p) const {
        return {m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3],
                m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3],
                m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3]};
    }

    // Determinant of the direction (upper-left 3x3) block.
    double det3() const {
        Mat3 d;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                d.m[i][j] = m[i][j];
        return d.det();
    }
};

// Geometry shared by all volumes of one scan.
struct GridMeta {
    Dims dims;
    Spacing spacing{1.0, 1.0, 1.0};
    Affine4 affine = Affine4::identity();
};

// dims must match exactly; spacing and affine within tolerance.
bool same_geometry(const GridMeta& a, const GridMeta& b, double tol = 1e-4);

} // namespace voxfuse
