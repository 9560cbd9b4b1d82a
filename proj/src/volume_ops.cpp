#include "gradreg/volume_ops.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gradreg/parallel.h"

namespace gradreg {

namespace {

struct AxisSample {
    int i0;
    int i1;
    double frac;
    bool clamped;
};

AxisSample resolve_axis(double p, int n) {
    AxisSample s;
    s.clamped = p < 0.0 || p > double(n - 1);
    double q = std::clamp(p, 0.0, double(n - 1));
    int i0 = int(q);  // q >= 0, so truncation == floor
    if (i0 > n - 2)
        i0 = n - 2 > 0 ? n - 2 : 0;
    s.i0 = i0;
    s.i1 = n > 1 ? i0 + 1 : i0;
    s.frac = n > 1 ? q - double(i0) : 0.0;
    return s;
}

void check_same_dims(const Dims& a, const Dims& b) {
    if (!(a == b))
        throw std::invalid_argument("shape mismatch: " + to_string(a) + " vs " + to_string(b));
}

}  // namespace

SampleGrad trilinear_sample_grad(const float* data, const Dims& dims, Vec3 p) {
    const AxisSample ax = resolve_axis(p.x, dims.x);
    const AxisSample ay = resolve_axis(p.y, dims.y);
    const AxisSample az = resolve_axis(p.z, dims.z);

    const std::int64_t sx = 1;
    const std::int64_t sy = dims.x;
    const std::int64_t sz = std::int64_t(dims.x) * dims.y;

    auto fetch = [&](int i, int j, int k) {
        return double(data[i * sx + j * sy + k * sz]);
    };

    const double c000 = fetch(ax.i0, ay.i0, az.i0);
    const double c100 = fetch(ax.i1, ay.i0, az.i0);
    const double c010 = fetch(ax.i0, ay.i1, az.i0);
    const double c110 = fetch(ax.i1, ay.i1, az.i0);
    const double c001 = fetch(ax.i0, ay.i0, az.i1);
    const double c101 = fetch(ax.i1, ay.i0, az.i1);
    const double c011 = fetch(ax.i0, ay.i1, az.i1);
    const double c111 = fetch(ax.i1, ay.i1, az.i1);

    // Two-sided weights: exact at frac 0 and frac 1, so integer coordinates
    // reproduce stored values bit-for-bit.
    const double fx = ax.frac, gx = 1.0 - ax.frac;
    const double fy = ay.frac, gy = 1.0 - ay.frac;
    const double fz = az.frac, gz = 1.0 - az.frac;

    const double c00 = c000 * gx + c100 * fx;
    const double c10 = c010 * gx + c110 * fx;
    const double c01 = c001 * gx + c101 * fx;
    const double c11 = c011 * gx + c111 * fx;

    const double c0 = c00 * gy + c10 * fy;
    const double c1 = c01 * gy + c11 * fy;

    SampleGrad out;
    out.value = c0 * gz + c1 * fz;

    if (!ax.clamped && dims.x > 1) {
        const double d0 = (c100 - c000) * gy + (c110 - c010) * fy;
        const double d1 = (c101 - c001) * gy + (c111 - c011) * fy;
        out.d.x = d0 * gz + d1 * fz;
    }
    if (!ay.clamped && dims.y > 1) {
        out.d.y = (c10 - c00) * gz + (c11 - c01) * fz;
    }
    if (!az.clamped && dims.z > 1)
        out.d.z = c1 - c0;

    return out;
}

double trilinear_sample(const Volume3& vol, Vec3 p) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
        throw std::invalid_argument("invalid coordinate: sample position must be finite");
    return trilinear_sample_grad(vol.data().data(), vol.dims(), p).value;
}

Volume3 warp_image(const Volume3& moving, const DisplacementField& field) {
    check_same_dims(moving.dims(), field.dims());
    const Dims d = moving.dims();
    const std::int64_t plane = std::int64_t(d.x) * d.y;
    std::vector<float> out(std::size_t(d.voxels()));
    const float* src = moving.data().data();

    parallel_for(d.z, [&](std::int64_t k) {
        std::int64_t v = k * plane;
        for (int j = 0; j < d.y; ++j) {
            for (int i = 0; i < d.x; ++i, ++v) {
                Vec3 p{i + double(field.comp(0, v)),
                       j + double(field.comp(1, v)),
                       k + double(field.comp(2, v))};
                out[v] = float(trilinear_sample_grad(src, d, p).value);
            }
        }
    });
    return Volume3(d, moving.spacing(), std::move(out));
}

LabelMap warp_labels(const LabelMap& labels, const DisplacementField& field) {
    check_same_dims(labels.dims(), field.dims());
    const Dims d = labels.dims();
    const std::int64_t plane = std::int64_t(d.x) * d.y;
    std::vector<std::int32_t> out(std::size_t(d.voxels()));
    const std::int32_t* src = labels.data().data();

    parallel_for(d.z, [&](std::int64_t k) {
        std::int64_t v = k * plane;
        for (int j = 0; j < d.y; ++j) {
            for (int i = 0; i < d.x; ++i, ++v) {
                // std::round = round half away from zero
                int si = std::clamp(int(std::round(i + double(field.comp(0, v)))), 0, d.x - 1);
                int sj = std::clamp(int(std::round(j + double(field.comp(1, v)))), 0, d.y - 1);
                int sk = std::clamp(int(std::round(k + double(field.comp(2, v)))), 0, d.z - 1);
                out[v] = src[labels.index(si, sj, sk)];
            }
        }
    });
    return LabelMap(d, labels.spacing(), std::move(out));
}

namespace {

// Shared stencil for float and double sources, writing doubles.
template <typename Src>
void gradient_lines(const Src* src, double* dst, const Dims& d, int axis) {
    const std::int64_t stride[3] = {1, d.x, std::int64_t(d.x) * d.y};
    const std::int64_t step = stride[axis];
    const int n = d[axis];
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    const std::int64_t lines = std::int64_t(d[a1]) * d[a2];

    parallel_for(lines, [&](std::int64_t line) {
        const std::int64_t base = (line % d[a1]) * stride[a1] + (line / d[a1]) * stride[a2];
        const Src* in = src + base;
        double* out = dst + base;
        out[0] = double(in[step]) - double(in[0]);
        for (int t = 1; t < n - 1; ++t)
            out[t * step] = (double(in[(t + 1) * step]) - double(in[(t - 1) * step])) * 0.5;
        out[std::int64_t(n - 1) * step] =
            double(in[std::int64_t(n - 1) * step]) - double(in[std::int64_t(n - 2) * step]);
    });
}

}  // namespace

namespace detail {

void spatial_gradient_raw(const float* src, double* dst, const Dims& dims, int axis) {
    gradient_lines(src, dst, dims, axis);
}

void spatial_gradient_raw_d(const double* src, double* dst, const Dims& dims, int axis) {
    gradient_lines(src, dst, dims, axis);
}

}  // namespace detail

Volume3 spatial_gradient(const Volume3& vol, int axis) {
    if (axis < 0 || axis > 2)
        throw std::invalid_argument("spatial_gradient: axis must be 0, 1 or 2");
    const Dims d = vol.dims();
    if (d[axis] < 2)
        throw std::invalid_argument("degenerate axis: extent " + std::to_string(d[axis]) +
                                    " < 2 along axis " + std::to_string(axis));
    std::vector<double> tmp(std::size_t(d.voxels()));
    gradient_lines(vol.data().data(), tmp.data(), d, axis);
    std::vector<float> out(tmp.begin(), tmp.end());
    return Volume3(d, vol.spacing(), std::move(out));
}

namespace {

inline Dims half_dims(const Dims& d) {
    return Dims{(d.x + 1) / 2, (d.y + 1) / 2, (d.z + 1) / 2};
}

// Averages 2x2x2 blocks of one scalar component, clipping partial blocks at
// the far borders.
void block_average(const float* src, const Dims& d, float* dst, const Dims& h, double scale) {
    const std::int64_t plane = std::int64_t(d.x) * d.y;
    const std::int64_t hplane = std::int64_t(h.x) * h.y;

    parallel_for(h.z, [&](std::int64_t bk) {
        const int k0 = int(bk) * 2;
        const int k1 = std::min(k0 + 1, d.z - 1);
        for (int bj = 0; bj < h.y; ++bj) {
            const int j0 = bj * 2;
            const int j1 = std::min(j0 + 1, d.y - 1);
            for (int bi = 0; bi < h.x; ++bi) {
                const int i0 = bi * 2;
                const int i1 = std::min(i0 + 1, d.x - 1);
                double sum = 0.0;
                int count = 0;
                for (int k = k0; k <= k1; ++k)
                    for (int j = j0; j <= j1; ++j)
                        for (int i = i0; i <= i1; ++i) {
                            sum += double(src[i + j * std::int64_t(d.x) + k * plane]);
                            ++count;
                        }
                dst[bi + bj * std::int64_t(h.x) + bk * hplane] = float(scale * sum / count);
            }
        }
    });
}

}  // namespace

Volume3 downsample2x(const Volume3& vol) {
    const Dims d = vol.dims();
    if (d.x < 4 || d.y < 4 || d.z < 4)
        throw std::invalid_argument("too small to downsample: dims " + to_string(d) +
                                    " (each axis must be >= 4)");
    const Dims h = half_dims(d);
    std::vector<float> out(std::size_t(h.voxels()));
    block_average(vol.data().data(), d, out.data(), h, 1.0);
    Vec3 s = vol.spacing();
    return Volume3(h, Vec3{s.x * 2, s.y * 2, s.z * 2}, std::move(out));
}

DisplacementField downsample_field2x(const DisplacementField& field) {
    const Dims d = field.dims();
    if (d.x < 4 || d.y < 4 || d.z < 4)
        throw std::invalid_argument("too small to downsample: dims " + to_string(d) +
                                    " (each axis must be >= 4)");
    const Dims h = half_dims(d);
    std::vector<float> out(std::size_t(3 * h.voxels()));
    for (int c = 0; c < 3; ++c)
        block_average(field.comp_ptr(c), d, out.data() + c * h.voxels(), h, 0.5);
    Vec3 s = field.spacing();
    return DisplacementField(h, Vec3{s.x * 2, s.y * 2, s.z * 2}, std::move(out));
}

DisplacementField upsample_field2x(const DisplacementField& field, Dims target_dims) {
    const Dims d = field.dims();
    const Dims t = target_dims;
    if (t.x < 1 || t.y < 1 || t.z < 1 || std::abs(t.x - 2 * d.x) > 1 || std::abs(t.y - 2 * d.y) > 1 ||
        std::abs(t.z - 2 * d.z) > 1)
        throw std::invalid_argument("upsample_field2x: target dims " + to_string(t) +
                                    " not within +-1 of twice " + to_string(d));

    const std::int64_t tn = t.voxels();
    const std::int64_t tplane = std::int64_t(t.x) * t.y;
    std::vector<float> out(std::size_t(3 * tn));

    for (int c = 0; c < 3; ++c) {
        const float* src = field.comp_ptr(c);
        float* dst = out.data() + c * tn;
        parallel_for(t.z, [&](std::int64_t k) {
            std::int64_t v = k * tplane;
            for (int j = 0; j < t.y; ++j)
                for (int i = 0; i < t.x; ++i, ++v) {
                    Vec3 p{i * 0.5, j * 0.5, k * 0.5};
                    dst[v] = float(2.0 * trilinear_sample_grad(src, d, p).value);
                }
        });
    }
    Vec3 s = field.spacing();
    return DisplacementField(t, Vec3{s.x * 0.5, s.y * 0.5, s.z * 0.5}, std::move(out));
}

}  // namespace gradreg
