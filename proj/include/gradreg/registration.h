#pragma once

#include <cstdint>
#include <vector>

#include "gradreg/fadam.h"
#include "gradreg/similarity.h"
#include "gradreg/types.h"

namespace gradreg {

struct RegistrationConfig {
    int levels = 3;
    // Indexed by pyramid level, 0 = finest (full resolution); optimization
    // still runs the coarsest level first.
    std::vector<int> iters_per_level = {100, 100, 50};
    LossConfig loss;
    FAdamConfig optim;  // lr in voxels of the level being optimized
    double converge_tol = 1e-5;
    int patience = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LevelTrace {
    int level = 0;  // pyramid level, 0 = finest
    Dims dims;
    std::vector<LossBreakdown> history;  // loss at each evaluated iterate
    int iterations_run = 0;
    bool converged = false;
    double best_total = 0.0;
};

struct RegistrationResult {
    DisplacementField field;  // best-loss iterate at the finest level
    std::vector<LevelTrace> levels;  // coarse -> fine
    bool converged = false;   // every level stopped on the convergence rule
};

// True iff the best total loss failed to improve by relative tol over the
// last `patience` entries (needs more than `patience` entries to judge).
bool check_convergence(const std::vector<double>& totals, double tol, int patience);

// Coarse-to-fine displacement-field optimization of the composite objective
// with FAdam and the polynomial lr schedule. Deterministic given the config.
// init, when non-null, warm-starts the pyramid from a full-resolution field.
RegistrationResult register_volumes(const Volume3& fixed, const Volume3& moving,
                                    const RegistrationConfig& cfg,
                                    const DisplacementField* init = nullptr);

}  // namespace gradreg
