#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gradreg {

struct FAdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double rho = 0.5;    // Fisher exponent applied to the bias-corrected second moment
    double clip = 1.0;   // RMS clip threshold on the natural gradient
    double weight_decay = 0.0;

    void validate() const;
};

// Per-parameter first and second moments plus the step counter.
struct FAdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;

    explicit FAdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One optimizer step, applied in order:
//   t += 1
//   v  = beta2*v + (1-beta2)*g^2
//   vh = v / (1 - beta2^t)
//   gn = g / (vh^rho + eps)
//   gn = gn / max(1, RMS(gn)/clip)
//   m  = beta1*m + (1-beta1)*gn            (no bias correction on m)
//   d  = theta / (vh^rho + eps)            (0 when weight_decay == 0)
//   theta -= lr * (m + weight_decay*d)
void fadam_step(std::span<double> params, std::span<const double> grads, FAdamState& state,
                const FAdamConfig& cfg);

// Polynomial decay lr0 * (1 - step/total_steps)^0.9.
double lr_schedule(int step, int total_steps, double lr0);

}  // namespace gradreg
