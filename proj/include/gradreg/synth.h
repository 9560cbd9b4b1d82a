#pragma once

#include <cstdint>
#include <optional>

#include "gradreg/types.h"

namespace gradreg {

struct SynthConfig {
    int size = 32;            // cube edge in voxels
    std::uint64_t seed = 0;
    double max_disp = 3.0;    // peak |u| of the ground-truth field, voxels
    bool make_labels = false;

    void validate() const;  // size >= 16, 0 <= max_disp < size/4
};

// Ground-truth registration problem: `moving` is a sum of random Gaussian
// blobs, the field is smoothed white noise rescaled to max_disp, and
// fixed = warp_image(moving, field), so registering moving onto fixed should
// recover the emitted field. Deterministic per seed.
struct SynthData {
    Volume3 fixed;
    Volume3 moving;
    DisplacementField field;
    std::optional<LabelMap> labels;   // intensity bands of the fixed volume
    double field_ndv_percent = 0.0;   // ndv of the emitted field
};

SynthData synthesize(const SynthConfig& cfg);

}  // namespace gradreg
