#include "gradreg/synth.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gradreg/metrics.h"
#include "gradreg/rng.h"
#include "gradreg/volume_ops.h"

namespace gradreg {

void SynthConfig::validate() const {
    if (size < 16)
        throw std::invalid_argument("SynthConfig: size must be >= 16");
    if (max_disp < 0.0 || max_disp >= double(size) / 4.0)
        throw std::invalid_argument("SynthConfig: max_disp must be in [0, size/4)");
}

namespace {

// Separable truncated-Gaussian smoothing, zero padding outside the volume.
void gaussian_smooth(std::vector<double>& data, const Dims& d, double sigma) {
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> kernel(std::size_t(2 * radius + 1));
    double ksum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        const double w = std::exp(-0.5 * double(t) * double(t) / (sigma * sigma));
        kernel[std::size_t(t + radius)] = w;
        ksum += w;
    }
    for (double& w : kernel)
        w /= ksum;

    const std::int64_t stride[3] = {1, d.x, std::int64_t(d.x) * d.y};
    std::vector<double> tmp(data.size());
    for (int axis = 0; axis < 3; ++axis) {
        const int n = d[axis];
        const int a1 = axis == 0 ? 1 : 0;
        const int a2 = axis == 2 ? 1 : 2;
        const std::int64_t lines = std::int64_t(d[a1]) * d[a2];
        for (std::int64_t line = 0; line < lines; ++line) {
            const std::int64_t base = (line % d[a1]) * stride[a1] + (line / d[a1]) * stride[a2];
            for (int t = 0; t < n; ++t) {
                double acc = 0.0;
                const int lo = std::max(0, t - radius);
                const int hi = std::min(n - 1, t + radius);
                for (int q = lo; q <= hi; ++q)
                    acc += kernel[std::size_t(q - t + radius)] *
                           data[std::size_t(base + q * stride[axis])];
                tmp[std::size_t(base + t * stride[axis])] = acc;
            }
        }
        std::swap(data, tmp);
    }
}

}  // namespace

SynthData synthesize(const SynthConfig& cfg) {
    cfg.validate();
    const int n = cfg.size;
    const Dims d{n, n, n};
    const Vec3 spacing{1.0, 1.0, 1.0};
    const std::int64_t N = d.voxels();
    Rng rng(cfg.seed);

    // Blobby moving image: enough signed Gaussian bumps that local windows
    // carry texture everywhere. Feature sizes sit between the LNCC window
    // and the voxel scale so every pyramid level sees usable structure.
    const int nblobs = 12 * n;
    const double sigma_lo = std::max(0.8, double(n) / 24.0);
    const double sigma_hi = double(n) / 12.0;
    std::vector<double> img(std::size_t(N), 0.0);
    for (int blob = 0; blob < nblobs; ++blob) {
        const double cx = rng.uniform(1.5, n - 2.5);
        const double cy = rng.uniform(1.5, n - 2.5);
        const double cz = rng.uniform(1.5, n - 2.5);
        const double sigma = rng.uniform(sigma_lo, sigma_hi);
        double amp = rng.uniform(0.4, 1.0);
        if (rng.uniform01() < 0.5)
            amp = -amp;
        const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
        const int reach = int(std::ceil(4.0 * sigma));
        const int i0 = std::max(0, int(cx) - reach), i1 = std::min(n - 1, int(cx) + reach);
        const int j0 = std::max(0, int(cy) - reach), j1 = std::min(n - 1, int(cy) + reach);
        const int k0 = std::max(0, int(cz) - reach), k1 = std::min(n - 1, int(cz) + reach);
        for (int k = k0; k <= k1; ++k)
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) {
                    const double r2 = (i - cx) * (i - cx) + (j - cy) * (j - cy) + (k - cz) * (k - cz);
                    img[std::size_t(i + std::int64_t(n) * (j + std::int64_t(n) * k))] +=
                        amp * std::exp(-r2 * inv2s2);
                }
    }
    double lo = img[0], hi = img[0];
    for (double v : img) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi > lo ? hi - lo : 1.0;
    std::vector<float> moving_data(std::size_t(N), 0.0f);
    for (std::int64_t v = 0; v < N; ++v)
        moving_data[std::size_t(v)] = float((img[std::size_t(v)] - lo) / range);
    Volume3 moving(d, spacing, std::move(moving_data));

    // Smooth random field: white noise per component, Gaussian-smoothed with
    // sigma = size/8, rescaled so the peak vector magnitude is max_disp.
    std::vector<std::vector<double>> comps(3, std::vector<double>(std::size_t(N)));
    for (int c = 0; c < 3; ++c)
        for (std::int64_t v = 0; v < N; ++v)
            comps[std::size_t(c)][std::size_t(v)] = rng.gaussian();
    for (int c = 0; c < 3; ++c)
        gaussian_smooth(comps[std::size_t(c)], d, double(n) / 8.0);

    double max_mag = 0.0;
    for (std::int64_t v = 0; v < N; ++v) {
        const double mag = std::sqrt(comps[0][std::size_t(v)] * comps[0][std::size_t(v)] +
                                     comps[1][std::size_t(v)] * comps[1][std::size_t(v)] +
                                     comps[2][std::size_t(v)] * comps[2][std::size_t(v)]);
        max_mag = std::max(max_mag, mag);
    }
    const double scale = (cfg.max_disp > 0.0 && max_mag > 0.0) ? cfg.max_disp / max_mag : 0.0;

    std::vector<float> field_data(std::size_t(3 * N));
    for (int c = 0; c < 3; ++c)
        for (std::int64_t v = 0; v < N; ++v)
            field_data[std::size_t(c * N + v)] = float(scale * comps[std::size_t(c)][std::size_t(v)]);
    DisplacementField field(d, spacing, std::move(field_data));

    Volume3 fixed = warp_image(moving, field);

    std::optional<LabelMap> labels;
    if (cfg.make_labels) {
        // Intensity bands of the fixed volume at fixed quantiles.
        std::vector<float> sorted = fixed.data();
        std::sort(sorted.begin(), sorted.end());
        const float q1 = sorted[std::size_t(double(N - 1) * 0.50)];
        const float q2 = sorted[std::size_t(double(N - 1) * 0.75)];
        const float q3 = sorted[std::size_t(double(N - 1) * 0.90)];
        std::vector<std::int32_t> lab(std::size_t(N), 0);
        for (std::int64_t v = 0; v < N; ++v) {
            const float x = fixed.data()[std::size_t(v)];
            lab[std::size_t(v)] = x >= q3 ? 3 : x >= q2 ? 2 : x >= q1 ? 1 : 0;
        }
        labels = LabelMap(d, spacing, std::move(lab));
    }

    const double field_ndv = ndv(field);
    return SynthData{std::move(fixed), std::move(moving), std::move(field), std::move(labels),
                     field_ndv};
}

}  // namespace gradreg
