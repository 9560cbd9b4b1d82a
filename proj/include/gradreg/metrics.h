#pragma once

#include <map>
#include <vector>

#include "gradreg/types.h"

namespace gradreg {

struct DiceResult {
    std::map<std::int32_t, double> per_label;
    double mean = 0.0;
};

struct Hd95Result {
    std::map<std::int32_t, double> per_label;  // mm
    double mean = 0.0;                         // mm, over computed labels
    std::vector<std::int32_t> skipped;         // labels empty in exactly one map
};

// Per-label overlap 2|A^B| / (|A|+|B|) over the union of labels present in
// either map; a label present in exactly one map scores 0.
DiceResult dice(const LabelMap& a, const LabelMap& b);

// 95th percentile (linear interpolation between order statistics) of the
// pooled bidirectional boundary distances in mm. Boundary voxels are mask
// voxels with at least one of their 6 face-neighbors outside the mask; the
// volume border counts as outside. Distances come from an exact Euclidean
// distance transform.
Hd95Result hd95(const LabelMap& a, const LabelMap& b);

// Mean Euclidean landmark mismatch in mm after moving each fixed landmark by
// the trilinearly interpolated displacement. spacing converts between mm and
// voxel coordinates.
double tre(const LandmarkSet& fixed_lms, const LandmarkSet& moving_lms,
           const DisplacementField& field, Vec3 spacing);

// Non-diffeomorphic volume in percent: for every unit cube of the deformed
// grid, the negative-signed-volume mass of its five-tetrahedra decomposition,
// averaged over the two complementary decompositions, relative to the total
// cell volume of the grid.
double ndv(const DisplacementField& field);

// Secondary folding diagnostic: percent of voxels whose central-difference
// Jacobian determinant of phi = x + u is <= 0. Coarser than ndv; reported
// separately and never mixed into it.
double negative_jacobian_percent(const DisplacementField& field);

// Alias of similarity gc(), exposed for reports.
double gc_score(const Volume3& fixed, const Volume3& moved);

}  // namespace gradreg
