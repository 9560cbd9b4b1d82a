#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gradreg {

// Voxel counts per axis; all grids use x-fastest linear storage.
struct Dims {
    int x = 0;
    int y = 0;
    int z = 0;

    bool operator==(const Dims&) const = default;

    std::int64_t voxels() const { return std::int64_t(x) * y * z; }

    int operator[](int axis) const {
        return axis == 0 ? x : axis == 1 ? y : z;
    }
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Vec3&) const = default;

    double operator[](int axis) const {
        return axis == 0 ? x : axis == 1 ? y : z;
    }
};

std::string to_string(const Dims& d);

// Dense 3D scalar grid with voxel spacing in mm. 32-bit storage; reductions
// accumulate in double. Immutable after construction.
class Volume3 {
public:
    Volume3(Dims dims, Vec3 spacing, std::vector<float> data);

    static Volume3 filled(Dims dims, Vec3 spacing, float value);

    const Dims& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const std::vector<float>& data() const { return data_; }

    std::int64_t index(int i, int j, int k) const {
        return i + std::int64_t(dims_.x) * (j + std::int64_t(dims_.y) * k);
    }
    float at(int i, int j, int k) const { return data_[index(i, j, k)]; }

private:
    Dims dims_;
    Vec3 spacing_;
    std::vector<float> data_;
};

// Integer label grid; label 0 is background and excluded from labels().
class LabelMap {
public:
    LabelMap(Dims dims, Vec3 spacing, std::vector<std::int32_t> data);

    const Dims& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const std::vector<std::int32_t>& data() const { return data_; }
    const std::vector<std::int32_t>& labels() const { return labels_; }

    std::int64_t index(int i, int j, int k) const {
        return i + std::int64_t(dims_.x) * (j + std::int64_t(dims_.y) * k);
    }
    std::int32_t at(int i, int j, int k) const { return data_[index(i, j, k)]; }

private:
    Dims dims_;
    Vec3 spacing_;
    std::vector<std::int32_t> data_;
    std::vector<std::int32_t> labels_;  // sorted distinct nonzero labels
};

// Per-voxel displacement u(x) in voxel units; the deformation is
// phi(x) = x + u(x) with x in voxel index coordinates.
// Component-major storage: all ux, then all uy, then all uz (matches the
// 5-D NIfTI field layout, so file round-trips are straight memcpys).
class DisplacementField {
public:
    DisplacementField(Dims dims, Vec3 spacing, std::vector<float> data);

    static DisplacementField zeros(Dims dims, Vec3 spacing);

    const Dims& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const std::vector<float>& data() const { return data_; }

    std::int64_t voxels() const { return dims_.voxels(); }

    std::int64_t index(int i, int j, int k) const {
        return i + std::int64_t(dims_.x) * (j + std::int64_t(dims_.y) * k);
    }
    // Component c in {0,1,2} at linear voxel index v.
    float comp(int c, std::int64_t v) const { return data_[c * voxels() + v]; }
    float comp(int c, int i, int j, int k) const { return comp(c, index(i, j, k)); }
    const float* comp_ptr(int c) const { return data_.data() + c * voxels(); }

private:
    Dims dims_;
    Vec3 spacing_;
    std::vector<float> data_;  // length 3 * voxels()
};

// Landmarks in millimeter world coordinates.
struct LandmarkSet {
    std::vector<Vec3> points;

    std::size_t count() const { return points.size(); }
};

}  // namespace gradreg
