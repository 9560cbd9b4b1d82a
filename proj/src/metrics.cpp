#include "gradreg/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "gradreg/parallel.h"
#include "gradreg/similarity.h"
#include "gradreg/volume_ops.h"

namespace gradreg {

namespace {

void check_same_dims(const Dims& a, const Dims& b) {
    if (!(a == b))
        throw std::invalid_argument("shape mismatch: " + to_string(a) + " vs " + to_string(b));
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Exact squared Euclidean distance transform (lower envelope of parabolas),
// one axis at a time with anisotropic spacing.

void dt1d(const double* f, double* out, int n, double sp, int* v, double* z) {
    int first = -1;
    for (int q = 0; q < n; ++q)
        if (f[q] < kInf) {
            first = q;
            break;
        }
    if (first < 0) {
        std::fill(out, out + n, kInf);
        return;
    }
    int k = 0;
    v[0] = first;
    z[0] = -kInf;
    z[1] = kInf;
    const double sp2 = sp * sp;
    for (int q = first + 1; q < n; ++q) {
        if (f[q] == kInf)
            continue;
        double s;
        for (;;) {
            const int vk = v[k];
            s = ((f[q] + sp2 * q * q) - (f[vk] + sp2 * vk * vk)) / (2.0 * sp2 * (q - vk));
            if (s > z[k])
                break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < double(q))
            ++k;
        const double dq = sp * (double(q) - double(v[k]));
        out[q] = dq * dq + f[v[k]];
    }
}

// In-place 3D squared EDT of `cost` (0 at seeds, +inf elsewhere).
void edt3(std::vector<double>& cost, const Dims& d, const Vec3& spacing) {
    const std::int64_t stride[3] = {1, d.x, std::int64_t(d.x) * d.y};
    for (int axis = 0; axis < 3; ++axis) {
        const int n = d[axis];
        const int a1 = axis == 0 ? 1 : 0;
        const int a2 = axis == 2 ? 1 : 2;
        const std::int64_t lines = std::int64_t(d[a1]) * d[a2];
        const double sp = spacing[axis];
        parallel_for(lines, [&](std::int64_t line) {
            std::vector<double> f(std::size_t(n), 0.0), o(std::size_t(n), 0.0),
                z(std::size_t(n) + 1, 0.0);
            std::vector<int> v(std::size_t(n), 0);
            const std::int64_t base = (line % d[a1]) * stride[a1] + (line / d[a1]) * stride[a2];
            for (int t = 0; t < n; ++t)
                f[std::size_t(t)] = cost[std::size_t(base + t * stride[axis])];
            dt1d(f.data(), o.data(), n, sp, v.data(), z.data());
            for (int t = 0; t < n; ++t)
                cost[std::size_t(base + t * stride[axis])] = o[std::size_t(t)];
        });
    }
}

// Mask voxels with at least one of the 6 face-neighbors outside the mask;
// the volume border counts as outside.
std::vector<std::int64_t> boundary_voxels(const std::vector<char>& mask, const Dims& d) {
    std::vector<std::int64_t> out;
    const std::int64_t sy = d.x;
    const std::int64_t sz = std::int64_t(d.x) * d.y;
    std::int64_t v = 0;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i, ++v) {
                if (!mask[std::size_t(v)])
                    continue;
                const bool edge = i == 0 || i == d.x - 1 || j == 0 || j == d.y - 1 || k == 0 ||
                                  k == d.z - 1 || !mask[std::size_t(v - 1)] ||
                                  !mask[std::size_t(v + 1)] || !mask[std::size_t(v - sy)] ||
                                  !mask[std::size_t(v + sy)] || !mask[std::size_t(v - sz)] ||
                                  !mask[std::size_t(v + sz)];
                if (edge)
                    out.push_back(v);
            }
    return out;
}

double percentile95(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size();
    if (m == 1)
        return values[0];
    const double rank = 0.95 * double(m - 1);
    const std::size_t lo = std::size_t(rank);
    const std::size_t hi = std::min(lo + 1, m - 1);
    const double frac = rank - double(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<std::int32_t> label_union(const LabelMap& a, const LabelMap& b) {
    std::vector<std::int32_t> u = a.labels();
    u.insert(u.end(), b.labels().begin(), b.labels().end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
}

}  // namespace

DiceResult dice(const LabelMap& a, const LabelMap& b) {
    check_same_dims(a.dims(), b.dims());
    const std::vector<std::int32_t> labels = label_union(a, b);
    std::unordered_map<std::int32_t, std::size_t> slot;
    for (std::size_t s = 0; s < labels.size(); ++s)
        slot[labels[s]] = s;

    std::vector<std::int64_t> na(labels.size(), 0), nb(labels.size(), 0), nab(labels.size(), 0);
    const std::int64_t n = a.dims().voxels();
    for (std::int64_t v = 0; v < n; ++v) {
        const std::int32_t la = a.data()[std::size_t(v)];
        const std::int32_t lb = b.data()[std::size_t(v)];
        if (la > 0)
            ++na[slot[la]];
        if (lb > 0)
            ++nb[slot[lb]];
        if (la > 0 && la == lb)
            ++nab[slot[la]];
    }

    DiceResult out;
    double sum = 0.0;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const double d = 2.0 * double(nab[s]) / double(na[s] + nb[s]);
        out.per_label[labels[s]] = d;
        sum += d;
    }
    out.mean = labels.empty() ? 0.0 : sum / double(labels.size());
    return out;
}

Hd95Result hd95(const LabelMap& a, const LabelMap& b) {
    check_same_dims(a.dims(), b.dims());
    if (!(a.spacing() == b.spacing()))
        throw std::invalid_argument("shape mismatch: label map spacings differ");
    const Dims d = a.dims();
    const Vec3 sp = a.spacing();
    const std::int64_t n = d.voxels();

    Hd95Result out;
    double sum = 0.0;
    int computed = 0;

    for (std::int32_t label : label_union(a, b)) {
        std::vector<char> ma(std::size_t(n), 0), mb(std::size_t(n), 0);
        bool has_a = false, has_b = false;
        for (std::int64_t v = 0; v < n; ++v) {
            ma[std::size_t(v)] = a.data()[std::size_t(v)] == label;
            mb[std::size_t(v)] = b.data()[std::size_t(v)] == label;
            has_a |= ma[std::size_t(v)] != 0;
            has_b |= mb[std::size_t(v)] != 0;
        }
        if (!has_a || !has_b) {
            out.skipped.push_back(label);
            continue;
        }
        const std::vector<std::int64_t> ba = boundary_voxels(ma, d);
        const std::vector<std::int64_t> bb = boundary_voxels(mb, d);

        std::vector<double> dist_to_b(std::size_t(n), kInf), dist_to_a(std::size_t(n), kInf);
        for (std::int64_t v : bb)
            dist_to_b[std::size_t(v)] = 0.0;
        for (std::int64_t v : ba)
            dist_to_a[std::size_t(v)] = 0.0;
        edt3(dist_to_b, d, sp);
        edt3(dist_to_a, d, sp);

        std::vector<double> pooled;
        pooled.reserve(ba.size() + bb.size());
        for (std::int64_t v : ba)
            pooled.push_back(std::sqrt(dist_to_b[std::size_t(v)]));
        for (std::int64_t v : bb)
            pooled.push_back(std::sqrt(dist_to_a[std::size_t(v)]));

        const double h = percentile95(pooled);
        out.per_label[label] = h;
        sum += h;
        ++computed;
    }
    out.mean = computed > 0 ? sum / double(computed) : 0.0;
    return out;
}

double tre(const LandmarkSet& fixed_lms, const LandmarkSet& moving_lms,
           const DisplacementField& field, Vec3 spacing) {
    if (fixed_lms.count() != moving_lms.count())
        throw std::invalid_argument("tre: landmark counts differ (" +
                                    std::to_string(fixed_lms.count()) + " vs " +
                                    std::to_string(moving_lms.count()) + ")");
    if (fixed_lms.count() == 0)
        return 0.0;
    const Dims d = field.dims();

    double sum = 0.0;
    for (std::size_t idx = 0; idx < fixed_lms.count(); ++idx) {
        const Vec3 mm = fixed_lms.points[idx];
        const Vec3 p{mm.x / spacing.x, mm.y / spacing.y, mm.z / spacing.z};
        if (p.x < 0 || p.x > d.x - 1 || p.y < 0 || p.y > d.y - 1 || p.z < 0 || p.z > d.z - 1)
            throw std::invalid_argument("tre: landmark " + std::to_string(idx) +
                                        " out of volume bounds");
        const double ux = trilinear_sample_grad(field.comp_ptr(0), d, p).value;
        const double uy = trilinear_sample_grad(field.comp_ptr(1), d, p).value;
        const double uz = trilinear_sample_grad(field.comp_ptr(2), d, p).value;
        const double qx = (p.x + ux) * spacing.x;
        const double qy = (p.y + uy) * spacing.y;
        const double qz = (p.z + uz) * spacing.z;
        const Vec3 m = moving_lms.points[idx];
        const double dx = qx - m.x, dy = qy - m.y, dz = qz - m.z;
        sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return sum / double(fixed_lms.count());
}

namespace {

// Five-tetrahedra decompositions of the unit cube, both parities, each tet
// ordered for positive volume on the undeformed cube. Corner id = i + 2j + 4k.
constexpr int kTetsA[5][4] = {
    {0, 1, 2, 4}, {3, 2, 1, 7}, {5, 1, 4, 7}, {6, 4, 2, 7}, {1, 2, 4, 7}};
constexpr int kTetsB[5][4] = {
    {1, 0, 5, 3}, {2, 0, 3, 6}, {4, 5, 0, 6}, {7, 6, 3, 5}, {0, 5, 3, 6}};

inline double tet_signed_volume(const double p[8][3], const int t[4]) {
    const double ax = p[t[1]][0] - p[t[0]][0];
    const double ay = p[t[1]][1] - p[t[0]][1];
    const double az = p[t[1]][2] - p[t[0]][2];
    const double bx = p[t[2]][0] - p[t[0]][0];
    const double by = p[t[2]][1] - p[t[0]][1];
    const double bz = p[t[2]][2] - p[t[0]][2];
    const double cx = p[t[3]][0] - p[t[0]][0];
    const double cy = p[t[3]][1] - p[t[0]][1];
    const double cz = p[t[3]][2] - p[t[0]][2];
    const double det =
        ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx);
    return det / 6.0;
}

}  // namespace

double ndv(const DisplacementField& field) {
    const Dims d = field.dims();
    if (d.x < 2 || d.y < 2 || d.z < 2)
        throw std::invalid_argument("degenerate axis: ndv needs every dim >= 2, got " +
                                    to_string(d));
    const std::int64_t sy = d.x;
    const std::int64_t sz = std::int64_t(d.x) * d.y;

    std::vector<double> partials(std::size_t(d.z - 1), 0.0);
    parallel_for(d.z - 1, [&](std::int64_t k) {
        double acc = 0.0;
        for (int j = 0; j < d.y - 1; ++j)
            for (int i = 0; i < d.x - 1; ++i) {
                const std::int64_t v = i + j * sy + k * sz;
                double p[8][3];
                for (int c = 0; c < 8; ++c) {
                    const int di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
                    const std::int64_t w = v + di + dj * sy + dk * sz;
                    p[c][0] = double(i + di) + double(field.comp(0, w));
                    p[c][1] = double(j + dj) + double(field.comp(1, w));
                    p[c][2] = double(k + dk) + double(field.comp(2, w));
                }
                double neg_a = 0.0, neg_b = 0.0;
                for (int t = 0; t < 5; ++t) {
                    const double va = tet_signed_volume(p, kTetsA[t]);
                    const double vb = tet_signed_volume(p, kTetsB[t]);
                    if (va < 0.0)
                        neg_a -= va;
                    if (vb < 0.0)
                        neg_b -= vb;
                }
                acc += 0.5 * (neg_a + neg_b);
            }
        partials[std::size_t(k)] = acc;
    });

    const double cells = double(d.x - 1) * double(d.y - 1) * double(d.z - 1);
    return 100.0 * pairwise_sum(partials.data(), partials.size()) / cells;
}

double negative_jacobian_percent(const DisplacementField& field) {
    const Dims d = field.dims();
    if (d.x < 2 || d.y < 2 || d.z < 2)
        throw std::invalid_argument("degenerate axis: jacobian needs every dim >= 2, got " +
                                    to_string(d));
    const std::int64_t N = d.voxels();

    // d u_c / d axis with the spatial_gradient stencil, then det(I + Du).
    std::vector<double> du(std::size_t(9 * N));
    for (int c = 0; c < 3; ++c)
        for (int axis = 0; axis < 3; ++axis)
            detail::spatial_gradient_raw(field.comp_ptr(c), du.data() + (c * 3 + axis) * N, d,
                                         axis);

    std::vector<double> partials(std::size_t(d.z), 0.0);
    const std::int64_t plane = std::int64_t(d.x) * d.y;
    parallel_for(d.z, [&](std::int64_t k) {
        std::int64_t count = 0;
        for (std::int64_t v = k * plane; v < (k + 1) * plane; ++v) {
            const double a = 1.0 + du[std::size_t(0 * N + v)];
            const double b = du[std::size_t(1 * N + v)];
            const double c = du[std::size_t(2 * N + v)];
            const double e = du[std::size_t(3 * N + v)];
            const double f = 1.0 + du[std::size_t(4 * N + v)];
            const double g = du[std::size_t(5 * N + v)];
            const double h = du[std::size_t(6 * N + v)];
            const double i = du[std::size_t(7 * N + v)];
            const double j = 1.0 + du[std::size_t(8 * N + v)];
            const double det = a * (f * j - g * i) - b * (e * j - g * h) + c * (e * i - f * h);
            if (det <= 0.0)
                ++count;
        }
        partials[std::size_t(k)] = double(count);
    });
    return 100.0 * pairwise_sum(partials.data(), partials.size()) / double(N);
}

double gc_score(const Volume3& fixed, const Volume3& moved) {
    return gc(fixed, moved);
}

}  // namespace gradreg
