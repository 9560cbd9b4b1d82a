#include "gradreg/similarity.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gradreg/parallel.h"
#include "gradreg/volume_ops.h"

namespace gradreg {

void LossConfig::validate() const {
    if (gamma < 0.0 || !std::isfinite(gamma))
        throw std::invalid_argument("LossConfig: gamma must be >= 0");
    if (lambda < 0.0 || !std::isfinite(lambda))
        throw std::invalid_argument("LossConfig: lambda must be >= 0");
    if (lncc_window < 3 || lncc_window % 2 == 0)
        throw std::invalid_argument("LossConfig: lncc_window must be odd and >= 3");
    if (!(eps > 0.0))
        throw std::invalid_argument("LossConfig: eps must be > 0");
}

namespace {

void check_same_dims(const Dims& a, const Dims& b) {
    if (!(a == b))
        throw std::invalid_argument("shape mismatch: " + to_string(a) + " vs " + to_string(b));
}

void check_gradient_dims(const Dims& d) {
    if (d.x < 2 || d.y < 2 || d.z < 2)
        throw std::invalid_argument("degenerate axis: dims " + to_string(d) +
                                    " need every axis >= 2 for gradients");
}

// Sum over the volume with one partial per z-plane (serial within a plane,
// pairwise tree across planes): bit-identical for any thread count.
template <typename PlaneFn>
double plane_sum(const Dims& d, PlaneFn&& fn) {
    std::vector<double> partials(std::size_t(d.z), 0.0);
    const std::int64_t plane = std::int64_t(d.x) * d.y;
    parallel_for(d.z, [&](std::int64_t k) { partials[std::size_t(k)] = fn(k, k * plane); });
    return pairwise_sum(partials.data(), partials.size());
}

// ---------------------------------------------------------------------------
// Truncated box sums, separable per axis.

template <typename SrcT>
void box_sum_axis(const SrcT* in, double* out, const Dims& d, int axis, int radius) {
    const std::int64_t stride[3] = {1, d.x, std::int64_t(d.x) * d.y};
    const std::int64_t step = stride[axis];
    const int n = d[axis];
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    const std::int64_t lines = std::int64_t(d[a1]) * d[a2];

    parallel_for(lines, [&](std::int64_t line) {
        const std::int64_t base = (line % d[a1]) * stride[a1] + (line / d[a1]) * stride[a2];
        const SrcT* src = in + base;
        double* dst = out + base;
        for (int t = 0; t < n; ++t) {
            const int lo = std::max(0, t - radius);
            const int hi = std::min(n - 1, t + radius);
            double s = 0.0;
            for (int q = lo; q <= hi; ++q)
                s += double(src[q * step]);
            dst[t * step] = s;
        }
    });
}

template <typename SrcT>
void box_sum_3d(const SrcT* in, double* out, double* tmp, const Dims& d, int radius) {
    box_sum_axis(in, out, d, 0, radius);
    box_sum_axis(out, tmp, d, 1, radius);
    box_sum_axis(tmp, out, d, 2, radius);
}

inline int axis_count(int t, int n, int radius) {
    return std::min(n - 1, t + radius) - std::max(0, t - radius) + 1;
}

// ---------------------------------------------------------------------------
// LNCC: forward value and optional backward accumulation into dLdW.
//
// Forward, per voxel x with window counts n(x) and box sums S*:
//   cc = cov / (max(stdF, eps) * max(stdW, eps))
// Backward uses the identity
//   dL_IC/dW(y) = -(1/N) * (F(y)*box[alpha](y) - W(y)*box[beta](y) + box[kappa](y))
// with alpha = 1/(n*fa*fb), beta = [stdW>eps]*cc/(n*varW),
// kappa = -meanF*alpha + meanW*beta, all evaluated per window center x.

double lncc_eval(const float* F, const double* W, const Dims& d, int window, double eps,
                 double* dLdW, double gscale) {
    const int r = window / 2;
    const std::int64_t N = d.voxels();
    std::vector<double> bf(N), bw(N), bff(N), bww(N), bfw(N), prod(N), tmp(N);

    box_sum_3d(F, bf.data(), tmp.data(), d, r);
    box_sum_3d(W, bw.data(), tmp.data(), d, r);
    parallel_for(N, [&](std::int64_t v) { prod[v] = double(F[v]) * double(F[v]); });
    box_sum_3d(prod.data(), bff.data(), tmp.data(), d, r);
    parallel_for(N, [&](std::int64_t v) { prod[v] = W[v] * W[v]; });
    box_sum_3d(prod.data(), bww.data(), tmp.data(), d, r);
    parallel_for(N, [&](std::int64_t v) { prod[v] = double(F[v]) * W[v]; });
    box_sum_3d(prod.data(), bfw.data(), tmp.data(), d, r);

    const bool backward = dLdW != nullptr;
    const std::int64_t plane = std::int64_t(d.x) * d.y;
    std::vector<double> partials(std::size_t(d.z), 0.0);

    parallel_for(d.z, [&](std::int64_t k) {
        const int cz = axis_count(int(k), d.z, r);
        double acc = 0.0;
        std::int64_t v = k * plane;
        for (int j = 0; j < d.y; ++j) {
            const int cy = axis_count(j, d.y, r) * cz;
            for (int i = 0; i < d.x; ++i, ++v) {
                const double n = double(axis_count(i, d.x, r) * cy);
                const double mean_f = bf[v] / n;
                const double mean_w = bw[v] / n;
                const double cov = bfw[v] / n - mean_f * mean_w;
                const double var_f = std::max(bff[v] / n - mean_f * mean_f, 0.0);
                const double var_w = std::max(bww[v] / n - mean_w * mean_w, 0.0);
                const double std_f = std::sqrt(var_f);
                const double std_w = std::sqrt(var_w);
                const double fa = std::max(std_f, eps);
                const double fb = std::max(std_w, eps);
                const double cc = cov / (fa * fb);
                acc += cc;
                if (backward) {
                    const double alpha = 1.0 / (n * fa * fb);
                    const double beta = std_w > eps ? cc / (n * var_w) : 0.0;
                    bff[v] = alpha;
                    bww[v] = beta;
                    bfw[v] = -mean_f * alpha + mean_w * beta;
                }
            }
        }
        partials[std::size_t(k)] = acc;
    });

    const double value = 1.0 - pairwise_sum(partials.data(), partials.size()) / double(N);

    if (backward) {
        box_sum_3d(bff.data(), bf.data(), tmp.data(), d, r);    // box[alpha]
        box_sum_3d(bww.data(), bw.data(), tmp.data(), d, r);    // box[beta]
        box_sum_3d(bfw.data(), prod.data(), tmp.data(), d, r);  // box[kappa]
        const double s = -gscale / double(N);
        parallel_for(N, [&](std::int64_t v) {
            dLdW[v] += s * (double(F[v]) * bf[v] - W[v] * bw[v] + prod[v]);
        });
    }
    return value;
}

// ---------------------------------------------------------------------------
// Global NCC on raw double buffers, with the backward signal
//   r(y) = dNCC/dQ(y) = p(y)/(fa*fb) - [normQ>eps] * ncc * q(y)/Sqq.

struct NccRaw {
    double ncc = 0.0;
    double mean_p = 0.0;
    double mean_q = 0.0;
    double inv_fafb = 0.0;
    double q_coef = 0.0;  // [normQ > eps] * ncc / Sqq
};

NccRaw ncc_raw(const double* P, const double* Q, const Dims& d, double eps) {
    const std::int64_t N = d.voxels();
    NccRaw out;
    out.mean_p = plane_sum(d,
                           [&](std::int64_t, std::int64_t v0) {
                               double s = 0.0;
                               const std::int64_t plane = std::int64_t(d.x) * d.y;
                               for (std::int64_t t = 0; t < plane; ++t)
                                   s += P[v0 + t];
                               return s;
                           }) /
                 double(N);
    out.mean_q = plane_sum(d,
                           [&](std::int64_t, std::int64_t v0) {
                               double s = 0.0;
                               const std::int64_t plane = std::int64_t(d.x) * d.y;
                               for (std::int64_t t = 0; t < plane; ++t)
                                   s += Q[v0 + t];
                               return s;
                           }) /
                 double(N);

    const std::int64_t plane = std::int64_t(d.x) * d.y;
    std::vector<double> ppq(std::size_t(d.z)), pqq(std::size_t(d.z)), ppp(std::size_t(d.z));
    parallel_for(d.z, [&](std::int64_t k) {
        double spq = 0.0, sqq = 0.0, spp = 0.0;
        for (std::int64_t t = k * plane; t < (k + 1) * plane; ++t) {
            const double p = P[t] - out.mean_p;
            const double q = Q[t] - out.mean_q;
            spq += p * q;
            spp += p * p;
            sqq += q * q;
        }
        ppq[std::size_t(k)] = spq;
        ppp[std::size_t(k)] = spp;
        pqq[std::size_t(k)] = sqq;
    });
    const double spq = pairwise_sum(ppq.data(), ppq.size());
    const double spp = pairwise_sum(ppp.data(), ppp.size());
    const double sqq = pairwise_sum(pqq.data(), pqq.size());

    const double norm_p = std::sqrt(spp);
    const double norm_q = std::sqrt(sqq);
    const double fa = std::max(norm_p, eps);
    const double fb = std::max(norm_q, eps);
    out.ncc = spq / (fa * fb);
    out.inv_fafb = 1.0 / (fa * fb);
    out.q_coef = norm_q > eps ? out.ncc / sqq : 0.0;
    return out;
}

// Accumulates factor * G_axis^T(r) into acc, where G is the gradient stencil
// (one-sided rows at the two boundary planes, central rows inside).
void gradient_transpose_scatter(const double* r, double* acc, const Dims& d, int axis,
                                double factor) {
    const std::int64_t stride[3] = {1, d.x, std::int64_t(d.x) * d.y};
    const std::int64_t step = stride[axis];
    const int n = d[axis];
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    const std::int64_t lines = std::int64_t(d[a1]) * d[a2];

    parallel_for(lines, [&](std::int64_t line) {
        const std::int64_t base = (line % d[a1]) * stride[a1] + (line / d[a1]) * stride[a2];
        const double* rs = r + base;
        double* as = acc + base;
        as[0] += factor * -rs[0];
        as[step] += factor * rs[0];
        for (int t = 1; t < n - 1; ++t) {
            const double half = 0.5 * rs[t * step];
            as[(t - 1) * step] += factor * -half;
            as[(t + 1) * step] += factor * half;
        }
        const std::int64_t last = std::int64_t(n - 1) * step;
        as[last] += factor * rs[last];
        as[last - step] += factor * -rs[last];
    });
}

// Gradient-correlation loss 1 - GC on raw buffers; backward accumulates
// gscale * dL_GC/dW = gscale * (-1/3) * sum_axes G^T(r_axis).
double gcloss_eval(const float* F, const double* W, const Dims& d, double eps, double* dLdW,
                   double gscale) {
    check_gradient_dims(d);
    const std::int64_t N = d.voxels();
    std::vector<double> P(N), Q(N);
    std::vector<double> R(dLdW ? N : 0);

    double sum_ncc = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
        detail::spatial_gradient_raw(F, P.data(), d, axis);
        detail::spatial_gradient_raw_d(W, Q.data(), d, axis);
        const NccRaw parts = ncc_raw(P.data(), Q.data(), d, eps);
        sum_ncc += parts.ncc;
        if (dLdW) {
            parallel_for(N, [&](std::int64_t v) {
                R[v] = (P[v] - parts.mean_p) * parts.inv_fafb - parts.q_coef * (Q[v] - parts.mean_q);
            });
            gradient_transpose_scatter(R.data(), dLdW, d, axis, -gscale / 3.0);
        }
    }
    return 1.0 - sum_ncc / 3.0;
}

// ---------------------------------------------------------------------------
// Diffusion regularizer on the displacement field. dreg, when given, is
// component-major like the field.

double diffusion_eval(const DisplacementField& field, double* dreg) {
    const Dims d = field.dims();
    const std::int64_t N = d.voxels();
    const std::int64_t plane = std::int64_t(d.x) * d.y;
    const std::int64_t stride[3] = {1, d.x, plane};
    const double norm = 1.0 / (3.0 * double(N));

    std::vector<double> partials(std::size_t(d.z), 0.0);
    parallel_for(d.z, [&](std::int64_t k) {
        double acc = 0.0;
        for (int j = 0; j < d.y; ++j) {
            std::int64_t v = k * plane + std::int64_t(j) * d.x;
            for (int i = 0; i < d.x; ++i, ++v) {
                const int idx[3] = {i, j, int(k)};
                for (int c = 0; c < 3; ++c) {
                    const double u = double(field.comp(c, v));
                    double g = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        const int na = d[a];
                        if (idx[a] < na - 1) {
                            const double fwd = double(field.comp(c, v + stride[a])) - u;
                            acc += fwd * fwd;
                            g -= fwd;
                        }
                        if (dreg && idx[a] > 0)
                            g += u - double(field.comp(c, v - stride[a]));
                    }
                    if (dreg)
                        dreg[c * N + v] = 2.0 * norm * g;
                }
            }
        }
        partials[std::size_t(k)] = acc;
    });
    return norm * pairwise_sum(partials.data(), partials.size());
}

LossBreakdown loss_core(const float* F, const double* W, const Dims& d,
                        const DisplacementField& field, const LossConfig& cfg, double* dLdW,
                        double* dreg) {
    LossBreakdown b;
    if (cfg.use_ic)
        b.l_ic = lncc_eval(F, W, d, cfg.lncc_window, cfg.eps, dLdW, 1.0);
    if (cfg.use_gc)
        b.l_gc = gcloss_eval(F, W, d, cfg.eps, dLdW, cfg.gamma);
    b.l_reg = diffusion_eval(field, dreg);
    b.l_sim = b.l_ic + cfg.gamma * b.l_gc;
    b.total = b.l_sim + cfg.lambda * b.l_reg;
    return b;
}

std::vector<double> to_double(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

}  // namespace

double ncc_global(const Volume3& a, const Volume3& b, double eps) {
    check_same_dims(a.dims(), b.dims());
    std::vector<double> A = to_double(a.data());
    std::vector<double> B = to_double(b.data());
    return ncc_raw(A.data(), B.data(), a.dims(), eps).ncc;
}

double gc(const Volume3& a, const Volume3& b, double eps) {
    check_same_dims(a.dims(), b.dims());
    std::vector<double> B = to_double(b.data());
    return 1.0 - gcloss_eval(a.data().data(), B.data(), a.dims(), eps, nullptr, 0.0);
}

double loss_gc(const Volume3& fixed, const Volume3& moved, double eps) {
    return 1.0 - gc(fixed, moved, eps);
}

double loss_lncc(const Volume3& fixed, const Volume3& moved, int window, double eps) {
    check_same_dims(fixed.dims(), moved.dims());
    if (window < 3 || window % 2 == 0)
        throw std::invalid_argument("invalid window: must be odd and >= 3");
    std::vector<double> W = to_double(moved.data());
    return lncc_eval(fixed.data().data(), W.data(), fixed.dims(), window, eps, nullptr, 0.0);
}

double loss_diffusion(const DisplacementField& field) {
    return diffusion_eval(field, nullptr);
}

LossBreakdown total_loss(const Volume3& fixed, const Volume3& moved,
                         const DisplacementField& field, const LossConfig& cfg) {
    cfg.validate();
    check_same_dims(fixed.dims(), moved.dims());
    check_same_dims(fixed.dims(), field.dims());
    std::vector<double> W = to_double(moved.data());
    return loss_core(fixed.data().data(), W.data(), fixed.dims(), field, cfg, nullptr, nullptr);
}

namespace {

// Warp the moving image in double precision; optionally collect the
// positional derivative of each sample.
void warp_double(const Volume3& moving, const DisplacementField& field, std::vector<double>& W,
                 std::vector<double>* dWdp) {
    const Dims d = moving.dims();
    const std::int64_t N = d.voxels();
    const std::int64_t plane = std::int64_t(d.x) * d.y;
    W.resize(std::size_t(N));
    if (dWdp)
        dWdp->resize(std::size_t(3 * N));
    const float* src = moving.data().data();

    parallel_for(d.z, [&](std::int64_t k) {
        std::int64_t v = k * plane;
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i, ++v) {
                Vec3 p{i + double(field.comp(0, v)), j + double(field.comp(1, v)),
                       k + double(field.comp(2, v))};
                const SampleGrad s = trilinear_sample_grad(src, d, p);
                W[std::size_t(v)] = s.value;
                if (dWdp) {
                    (*dWdp)[std::size_t(v)] = s.d.x;
                    (*dWdp)[std::size_t(N + v)] = s.d.y;
                    (*dWdp)[std::size_t(2 * N + v)] = s.d.z;
                }
            }
    });
}

}  // namespace

LossBreakdown total_loss_at(const Volume3& fixed, const Volume3& moving,
                            const DisplacementField& field, const LossConfig& cfg) {
    cfg.validate();
    check_same_dims(fixed.dims(), moving.dims());
    check_same_dims(fixed.dims(), field.dims());
    std::vector<double> W;
    warp_double(moving, field, W, nullptr);
    return loss_core(fixed.data().data(), W.data(), fixed.dims(), field, cfg, nullptr, nullptr);
}

std::pair<LossBreakdown, DisplacementField> total_loss_grad(const Volume3& fixed,
                                                            const Volume3& moving,
                                                            const DisplacementField& field,
                                                            const LossConfig& cfg) {
    cfg.validate();
    check_same_dims(fixed.dims(), moving.dims());
    check_same_dims(fixed.dims(), field.dims());
    const Dims d = fixed.dims();
    const std::int64_t N = d.voxels();

    std::vector<double> W, dWdp;
    warp_double(moving, field, W, &dWdp);

    std::vector<double> dLdW(std::size_t(N), 0.0);
    std::vector<double> dreg(std::size_t(3 * N), 0.0);
    const LossBreakdown b =
        loss_core(fixed.data().data(), W.data(), d, field, cfg, dLdW.data(), dreg.data());

    std::vector<float> grad(std::size_t(3 * N));
    parallel_for(N, [&](std::int64_t v) {
        for (int c = 0; c < 3; ++c)
            grad[std::size_t(c * N + v)] =
                float(dLdW[std::size_t(v)] * dWdp[std::size_t(c * N + v)] +
                      cfg.lambda * dreg[std::size_t(c * N + v)]);
    });
    return {b, DisplacementField(d, field.spacing(), std::move(grad))};
}

}  // namespace gradreg
