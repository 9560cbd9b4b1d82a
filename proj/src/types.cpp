#include "gradreg/types.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gradreg {

namespace {

void check_dims(const Dims& d) {
    if (d.x < 1 || d.y < 1 || d.z < 1)
        throw std::invalid_argument("invalid dims " + to_string(d) + ": each axis must be >= 1");
}

void check_spacing(const Vec3& s) {
    if (!(s.x > 0.0) || !(s.y > 0.0) || !(s.z > 0.0))
        throw std::invalid_argument("invalid spacing: components must be > 0");
}

void check_length(std::size_t got, std::int64_t want, const char* what) {
    if (std::int64_t(got) != want)
        throw std::invalid_argument(std::string(what) + ": data length " + std::to_string(got) +
                                    " does not match dims (want " + std::to_string(want) + ")");
}

void check_finite(const std::vector<float>& data, const char* what) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            throw std::invalid_argument(std::string(what) + ": non-finite value at linear index " +
                                        std::to_string(i));
    }
}

}  // namespace

std::string to_string(const Dims& d) {
    return "(" + std::to_string(d.x) + ", " + std::to_string(d.y) + ", " + std::to_string(d.z) + ")";
}

Volume3::Volume3(Dims dims, Vec3 spacing, std::vector<float> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    check_dims(dims_);
    check_spacing(spacing_);
    check_length(data_.size(), dims_.voxels(), "Volume3");
    check_finite(data_, "Volume3");
}

Volume3 Volume3::filled(Dims dims, Vec3 spacing, float value) {
    return Volume3(dims, spacing, std::vector<float>(std::size_t(dims.voxels()), value));
}

LabelMap::LabelMap(Dims dims, Vec3 spacing, std::vector<std::int32_t> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    check_dims(dims_);
    check_spacing(spacing_);
    check_length(data_.size(), dims_.voxels(), "LabelMap");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (data_[i] < 0)
            throw std::invalid_argument("LabelMap: negative label at linear index " + std::to_string(i));
    }
    labels_.assign(data_.begin(), data_.end());
    std::sort(labels_.begin(), labels_.end());
    labels_.erase(std::unique(labels_.begin(), labels_.end()), labels_.end());
    if (!labels_.empty() && labels_.front() == 0)
        labels_.erase(labels_.begin());
}

DisplacementField::DisplacementField(Dims dims, Vec3 spacing, std::vector<float> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    check_dims(dims_);
    check_spacing(spacing_);
    check_length(data_.size(), 3 * dims_.voxels(), "DisplacementField");
    check_finite(data_, "DisplacementField");
}

DisplacementField DisplacementField::zeros(Dims dims, Vec3 spacing) {
    return DisplacementField(dims, spacing, std::vector<float>(std::size_t(3 * dims.voxels()), 0.0f));
}

}  // namespace gradreg
