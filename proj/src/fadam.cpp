#include "gradreg/fadam.h"

#include <cmath>
#include <stdexcept>

#include "gradreg/errors.h"
#include "gradreg/parallel.h"

namespace gradreg {

void FAdamConfig::validate() const {
    if (!(lr > 0.0))
        throw std::invalid_argument("FAdamConfig: lr must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("FAdamConfig: betas must be in [0, 1)");
    if (!(eps > 0.0))
        throw std::invalid_argument("FAdamConfig: eps must be > 0");
    if (!(rho > 0.0) || rho > 1.0)
        throw std::invalid_argument("FAdamConfig: rho must be in (0, 1]");
    if (!(clip > 0.0))
        throw std::invalid_argument("FAdamConfig: clip must be > 0");
    if (weight_decay < 0.0)
        throw std::invalid_argument("FAdamConfig: weight_decay must be >= 0");
}

namespace {

constexpr std::int64_t kChunk = 4096;  // fixed reduction chunk, independent of thread count

inline double fisher_pow(double vhat, double rho) {
    return rho == 0.5 ? std::sqrt(vhat) : std::pow(vhat, rho);
}

}  // namespace

void fadam_step(std::span<double> params, std::span<const double> grads, FAdamState& state,
                const FAdamConfig& cfg) {
    cfg.validate();
    const std::int64_t n = std::int64_t(params.size());
    if (grads.size() != params.size() || state.m.size() != params.size() ||
        state.v.size() != params.size())
        throw std::invalid_argument("fadam_step: params, grads and state lengths must match");
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(grads[std::size_t(i)]))
            throw divergence_error("divergent gradient: non-finite value at index " +
                                   std::to_string(i));
    }

    state.t += 1;
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));

    double* v = state.v.data();
    double* m = state.m.data();
    const double* g = grads.data();
    double* theta = params.data();

    // Pass 1: second-moment update and the fixed-chunk partials of sum(gn^2).
    const std::int64_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partials(std::size_t(chunks), 0.0);
    parallel_for(chunks, [&](std::int64_t c) {
        const std::int64_t lo = c * kChunk;
        const std::int64_t hi = std::min(lo + kChunk, n);
        double acc = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) {
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double denom = fisher_pow(v[i] / bc2, cfg.rho) + cfg.eps;
            const double gn = g[i] / denom;
            acc += gn * gn;
        }
        partials[std::size_t(c)] = acc;
    });
    const double rms = n > 0 ? std::sqrt(pairwise_sum(partials.data(), partials.size()) / double(n))
                             : 0.0;
    const double clip_scale = 1.0 / std::max(1.0, rms / cfg.clip);

    // Pass 2: clip, momentum, decay, parameter update. The denominator is
    // recomputed from the already-updated v, which is deterministic.
    parallel_for(chunks, [&](std::int64_t c) {
        const std::int64_t lo = c * kChunk;
        const std::int64_t hi = std::min(lo + kChunk, n);
        for (std::int64_t i = lo; i < hi; ++i) {
            const double denom = fisher_pow(v[i] / bc2, cfg.rho) + cfg.eps;
            const double gn = clip_scale * (g[i] / denom);
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gn;
            const double decay = cfg.weight_decay > 0.0 ? theta[i] / denom : 0.0;
            theta[i] -= cfg.lr * (m[i] + cfg.weight_decay * decay);
        }
    });
}

double lr_schedule(int step, int total_steps, double lr0) {
    if (total_steps <= 0)
        throw std::invalid_argument("lr_schedule: total_steps must be > 0");
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("lr_schedule: step " + std::to_string(step) +
                                    " outside [0, " + std::to_string(total_steps) + "]");
    return lr0 * std::pow(1.0 - double(step) / double(total_steps), 0.9);
}

}  // namespace gradreg
