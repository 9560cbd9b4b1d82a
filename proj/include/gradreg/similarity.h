#pragma once

#include <utility>

#include "gradreg/types.h"

namespace gradreg {

struct LossConfig {
    double gamma = 0.5;   // weight of the gradient-correlation loss
    double lambda = 2.0;  // weight of the diffusion regularizer
    int lncc_window = 9;  // odd cube edge in voxels; truncated at borders
    double eps = 1e-5;    // floor applied to correlation denominators
    bool use_ic = true;   // intensity (LNCC) term toggle
    bool use_gc = true;   // gradient-correlation term toggle

    void validate() const;
};

// total = l_sim + lambda * l_reg with l_sim = l_ic + gamma * l_gc.
// Disabled terms are reported as 0 so the identities always hold.
struct LossBreakdown {
    double l_ic = 0.0;
    double l_gc = 0.0;
    double l_sim = 0.0;
    double l_reg = 0.0;
    double total = 0.0;
};

// Pearson correlation over all voxels; each denominator factor is floored at
// eps, which defines the constant-input case as 0 correlation.
double ncc_global(const Volume3& a, const Volume3& b, double eps = 1e-5);

// Mean of the three axis-wise ncc_global values of the spatial gradients.
double gc(const Volume3& a, const Volume3& b, double eps = 1e-5);

// 1 - gc(fixed, moved), in [0, 2].
double loss_gc(const Volume3& fixed, const Volume3& moved, double eps = 1e-5);

// 1 - mean local correlation coefficient over window^3 neighborhoods
// (truncated at borders), computed via box sums.
double loss_lncc(const Volume3& fixed, const Volume3& moved, int window, double eps = 1e-5);

// Mean squared forward-difference derivative of the displacement:
// (1/(3N)) * sum_x sum_axes |u(x+e) - u(x)|^2; the last plane per axis
// contributes zero.
double loss_diffusion(const DisplacementField& field);

LossBreakdown total_loss(const Volume3& fixed, const Volume3& moved,
                         const DisplacementField& field, const LossConfig& cfg);

// Same objective evaluated from the moving image: the warped intensities are
// formed internally in double precision. This is the scalar function that
// total_loss_grad differentiates, so finite differences of it validate the
// analytic gradient without float32 round-off in the warp.
LossBreakdown total_loss_at(const Volume3& fixed, const Volume3& moving,
                            const DisplacementField& field, const LossConfig& cfg);

// dL/du at every voxel: loss gradients w.r.t. the warped image, chained
// through the trilinear warp Jacobian, plus the diffusion term's direct
// gradient. Clamped samples have zero positional derivative across the
// clamped axis.
std::pair<LossBreakdown, DisplacementField> total_loss_grad(const Volume3& fixed,
                                                            const Volume3& moving,
                                                            const DisplacementField& field,
                                                            const LossConfig& cfg);

}  // namespace gradreg
