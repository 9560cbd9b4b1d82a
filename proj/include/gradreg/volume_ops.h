#pragma once

#include "gradreg/types.h"

namespace gradreg {

// Trilinear interpolation at continuous voxel coordinate p; coordinates
// outside [0, n-1] per axis are clamped to the border (replication).
double trilinear_sample(const Volume3& vol, Vec3 p);

// Sample value plus the positional derivative d(sample)/dp. The derivative
// across an axis is zero when p was clamped on that axis.
struct SampleGrad {
    double value = 0.0;
    Vec3 d;
};
SampleGrad trilinear_sample_grad(const float* data, const Dims& dims, Vec3 p);

// out[x] = sample(moving, x + u(x)); dims and spacing carried over.
Volume3 warp_image(const Volume3& moving, const DisplacementField& field);

// Nearest-neighbor warp: round half away from zero per axis, then clamp.
LabelMap warp_labels(const LabelMap& labels, const DisplacementField& field);

// Central differences in the interior, one-sided at the two boundary planes.
// Units are intensity per voxel. axis in {0,1,2}.
Volume3 spatial_gradient(const Volume3& vol, int axis);

// 2x2x2 block averaging; odd trailing voxels fold into a final partial
// block. Dims halve (ceil), spacing doubles.
Volume3 downsample2x(const Volume3& vol);

// Trilinear transfer of each component onto target dims (each within +-1 of
// twice the source), then scaled by 2: displacements are measured in voxels
// of the finer grid.
DisplacementField upsample_field2x(const DisplacementField& field, Dims target_dims);

// Block-averaged field at half resolution with components scaled by 0.5,
// used to seed coarse pyramid levels from a full-resolution initial field.
DisplacementField downsample_field2x(const DisplacementField& field);

namespace detail {

// Raw-buffer gradient kernels for the double-precision loss paths. Same
// stencil as spatial_gradient; callers guarantee dims[axis] >= 2.
void spatial_gradient_raw(const float* src, double* dst, const Dims& dims, int axis);
void spatial_gradient_raw_d(const double* src, double* dst, const Dims& dims, int axis);

}  // namespace detail

}  // namespace gradreg
