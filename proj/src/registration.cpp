#include "gradreg/registration.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gradreg/errors.h"
#include "gradreg/volume_ops.h"

namespace gradreg {

void RegistrationConfig::validate() const {
    if (levels < 1)
        throw std::invalid_argument("RegistrationConfig: levels must be >= 1");
    if (int(iters_per_level.size()) != levels)
        throw std::invalid_argument("RegistrationConfig: iters_per_level must have one entry per level");
    for (int it : iters_per_level)
        if (it < 1)
            throw std::invalid_argument("RegistrationConfig: iterations per level must be >= 1");
    if (!(converge_tol > 0.0))
        throw std::invalid_argument("RegistrationConfig: converge_tol must be > 0");
    if (patience < 1)
        throw std::invalid_argument("RegistrationConfig: patience must be >= 1");
    loss.validate();
    optim.validate();
}

bool check_convergence(const std::vector<double>& totals, double tol, int patience) {
    if (totals.empty())
        throw std::invalid_argument("check_convergence: history must be non-empty");
    const int len = int(totals.size());
    if (len <= patience)
        return false;
    // Reference: best seen up to the start of the trailing `patience` window.
    double best_ref = totals[0];
    for (int i = 1; i <= len - patience; ++i)
        best_ref = std::min(best_ref, totals[i]);
    double best_now = best_ref;
    for (int i = len - patience + 1; i < len; ++i)
        best_now = std::min(best_now, totals[i]);
    return best_ref - best_now <= tol * std::abs(best_ref);
}

namespace {

std::vector<float> to_float(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        // 1e30 voxels is far past any legitimate displacement and keeps the
        // float32 materialization (and the 2x upsample) from overflowing.
        if (!std::isfinite(v[i]) || std::abs(v[i]) > 1e30)
            throw divergence_error("divergent gradient: displacement magnitude blew up");
        out[i] = float(v[i]);
    }
    return out;
}

}  // namespace

RegistrationResult register_volumes(const Volume3& fixed, const Volume3& moving,
                                    const RegistrationConfig& cfg,
                                    const DisplacementField* init) {
    cfg.validate();
    if (!(fixed.dims() == moving.dims()))
        throw std::invalid_argument("shape mismatch: fixed " + to_string(fixed.dims()) +
                                    " vs moving " + to_string(moving.dims()));
    if (!(fixed.spacing() == moving.spacing()))
        throw std::invalid_argument("shape mismatch: fixed and moving spacing differ");
    const int min_extent = 4 << (cfg.levels - 1);
    const Dims full = fixed.dims();
    if (full.x < min_extent || full.y < min_extent || full.z < min_extent)
        throw std::invalid_argument("volume too small for pyramid depth: dims " + to_string(full) +
                                    " need >= " + std::to_string(min_extent) + " per axis for " +
                                    std::to_string(cfg.levels) + " levels");
    if (init && !(init->dims() == full))
        throw std::invalid_argument("shape mismatch: initial field dims " + to_string(init->dims()));

    // Pyramids, index 0 = finest.
    std::vector<Volume3> fixed_pyr{fixed};
    std::vector<Volume3> moving_pyr{moving};
    for (int l = 1; l < cfg.levels; ++l) {
        fixed_pyr.push_back(downsample2x(fixed_pyr.back()));
        moving_pyr.push_back(downsample2x(moving_pyr.back()));
    }

    RegistrationResult result{DisplacementField::zeros(full, fixed.spacing()), {}, false};

    // Current field for the level about to be optimized.
    DisplacementField current = [&] {
        if (!init)
            return DisplacementField::zeros(fixed_pyr.back().dims(), fixed_pyr.back().spacing());
        DisplacementField f = *init;
        for (int l = 1; l < cfg.levels; ++l)
            f = downsample_field2x(f);
        return f;
    }();

    bool all_converged = true;

    // The schedule horizon spans the whole run, mirroring a training
    // schedule over the full budget; each level restarts the step index, so
    // no level ends at a fully decayed rate.
    int total_iters = 0;
    for (int it : cfg.iters_per_level)
        total_iters += it;

    for (int l = cfg.levels - 1; l >= 0; --l) {
        const Volume3& fx = fixed_pyr[std::size_t(l)];
        const Volume3& mv = moving_pyr[std::size_t(l)];
        const int iters = cfg.iters_per_level[std::size_t(l)];

        std::vector<double> params(current.data().begin(), current.data().end());
        std::vector<double> best_params = params;
        double best_total = std::numeric_limits<double>::infinity();

        FAdamState state(params.size());
        FAdamConfig opt = cfg.optim;

        LevelTrace trace;
        trace.level = l;
        trace.dims = fx.dims();
        std::vector<double> totals;
        bool level_converged = false;

        for (int it = 0; it < iters; ++it) {
            DisplacementField f(fx.dims(), fx.spacing(), to_float(params));
            auto [breakdown, grad] = total_loss_grad(fx, mv, f, cfg.loss);
            if (!std::isfinite(breakdown.total))
                throw divergence_error("divergent gradient: non-finite loss at level " +
                                       std::to_string(trace.level) + ", iteration " +
                                       std::to_string(it));
            trace.history.push_back(breakdown);
            totals.push_back(breakdown.total);
            if (breakdown.total < best_total) {
                best_total = breakdown.total;
                best_params = params;
            }
            if (check_convergence(totals, cfg.converge_tol, cfg.patience)) {
                level_converged = true;
                break;
            }
            opt.lr = lr_schedule(it, total_iters, cfg.optim.lr);
            std::vector<double> g(grad.data().begin(), grad.data().end());
            fadam_step(params, g, state, opt);
        }

        trace.iterations_run = int(trace.history.size());
        trace.converged = level_converged;
        trace.best_total = best_total;
        result.levels.push_back(std::move(trace));
        all_converged = all_converged && level_converged;

        DisplacementField best(fx.dims(), fx.spacing(), to_float(best_params));
        if (l > 0)
            current = upsample_field2x(best, fixed_pyr[std::size_t(l - 1)].dims());
        else
            result.field = std::move(best);
    }

    result.converged = all_converged;
    return result;
}

}  // namespace gradreg
