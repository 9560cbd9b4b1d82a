#include <doctest.h>

#include <cmath>

#include "gradreg/similarity.h"
#include "gradreg/volume_ops.h"
#include "test_util.h"

using namespace gradreg;
using testutil::grad_check_worst_margin;
using testutil::random_safe_field;
using testutil::random_volume;

namespace {

Volume3 ramp_axis(Dims d, int axis) {
    std::vector<float> data(std::size_t(d.voxels()));
    std::int64_t v = 0;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i, ++v)
                data[std::size_t(v)] = float(axis == 0 ? i : axis == 1 ? j : k);
    return Volume3(d, {1, 1, 1}, std::move(data));
}

Volume3 affine_of(const Volume3& a, float scale, float offset) {
    std::vector<float> data(a.data());
    for (auto& x : data)
        x = scale * x + offset;
    return Volume3(a.dims(), a.spacing(), std::move(data));
}

// Values on a coarse lattice so that +1 offsets stay exactly representable.
Volume3 lattice_volume(Dims d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> data(std::size_t(d.voxels()));
    for (auto& v : data)
        v = float(rng.uniform_int(0, 255)) / 256.0f;
    return Volume3(d, {1, 1, 1}, std::move(data));
}

}  // namespace

TEST_CASE("ncc_global: hand example, identities, symmetry, affine response") {
    SUBCASE("2x2x1 hand example evaluates to -0.4") {
        Volume3 a({2, 2, 1}, {1, 1, 1}, {0, 1, 2, 3});
        Volume3 b({2, 2, 1}, {1, 1, 1}, {1, 3, 2, 0});
        CHECK(ncc_global(a, b) == doctest::Approx(-0.4).epsilon(1e-12));
    }
    Volume3 a = random_volume({4, 4, 4}, 21);
    SUBCASE("self-correlation and sign flip") {
        CHECK(ncc_global(a, a) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(ncc_global(a, affine_of(a, -1.0f, 0.0f)) == doctest::Approx(-1.0).epsilon(1e-6));
    }
    SUBCASE("symmetry to 1e-12") {
        Volume3 b = random_volume({4, 4, 4}, 22);
        CHECK(std::abs(ncc_global(a, b) - ncc_global(b, a)) < 1e-12);
    }
    SUBCASE("affine response: invariant for positive scale, negated for negative") {
        Volume3 b = random_volume({4, 4, 4}, 23);
        const double base = ncc_global(a, b);
        CHECK(ncc_global(a, affine_of(b, 2.5f, 0.75f)) == doctest::Approx(base).epsilon(1e-6));
        CHECK(ncc_global(a, affine_of(b, -2.5f, 0.75f)) == doctest::Approx(-base).epsilon(1e-6));
    }
    SUBCASE("constant input yields 0, not an error") {
        CHECK(ncc_global(a, Volume3::filled({4, 4, 4}, {1, 1, 1}, 5.0f)) == 0.0);
    }
    SUBCASE("dims mismatch errors") {
        CHECK_THROWS_WITH_AS(ncc_global(a, random_volume({4, 4, 5}, 2)),
                             doctest::Contains("shape mismatch"), std::invalid_argument);
    }
}

TEST_CASE("gc: identities, affine invariance, orthogonal ramps, constant shifts") {
    Volume3 a = random_volume({5, 5, 5}, 31);
    SUBCASE("gc(A, A) = 1") {
        CHECK(gc(a, a) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("gc(A, 2A+5) = 1") {
        CHECK(gc(a, affine_of(a, 2.0f, 5.0f)) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("x-ramp vs y-ramp hits the constant-gradient floor on every axis") {
        CHECK(gc(ramp_axis({5, 5, 5}, 0), ramp_axis({5, 5, 5}, 1)) == 0.0);
    }
    SUBCASE("adding a representable constant leaves gc exactly unchanged") {
        Volume3 la = lattice_volume({5, 5, 5}, 32);
        Volume3 lb = lattice_volume({5, 5, 5}, 33);
        CHECK(gc(la, lb) == gc(affine_of(la, 1.0f, 1.0f), lb));
        CHECK(gc(la, lb) == gc(la, affine_of(lb, 1.0f, 1.0f)));
    }
    SUBCASE("degenerate axis errors") {
        Volume3 thin({4, 4, 1}, {1, 1, 1}, std::vector<float>(16, 0.0f));
        CHECK_THROWS_WITH_AS(gc(thin, thin), doctest::Contains("degenerate axis"),
                             std::invalid_argument);
    }
}

TEST_CASE("loss_gc: range endpoints and the orthogonal-ramp case") {
    Volume3 a = random_volume({5, 5, 5}, 41);
    CHECK(loss_gc(a, a) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(loss_gc(a, affine_of(a, -1.0f, 0.0f)) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(loss_gc(ramp_axis({5, 5, 5}, 0), ramp_axis({5, 5, 5}, 1)) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("loss_lncc: identities and the global-NCC degeneracy oracle") {
    Volume3 a = random_volume({6, 6, 6}, 51);
    SUBCASE("self-similarity is 0") {
        CHECK(loss_lncc(a, a, 5) == doctest::Approx(0.0).epsilon(1e-5));
    }
    SUBCASE("local affine invariance") {
        CHECK(loss_lncc(a, affine_of(a, 2.0f, 1.0f), 5) == doctest::Approx(0.0).epsilon(1e-5));
    }
    SUBCASE("window covering the whole volume degenerates to global NCC") {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            Rng rng(seed + 100);
            const Dims d{int(4 + seed % 3), int(4 + (seed + 1) % 3), int(4 + (seed + 2) % 3)};
            Volume3 f = random_volume(d, seed * 2 + 1);
            Volume3 m = random_volume(d, seed * 2 + 2);
            const int window = 2 * std::max({d.x, d.y, d.z}) - 1;
            CHECK(std::abs(loss_lncc(f, m, window) - (1.0 - ncc_global(f, m))) < 1e-6);
        }
    }
    SUBCASE("even or undersized window errors") {
        CHECK_THROWS_AS(loss_lncc(a, a, 4), std::invalid_argument);
        CHECK_THROWS_AS(loss_lncc(a, a, 1), std::invalid_argument);
    }
}

TEST_CASE("loss_diffusion: zero, translation, unit-ramp normalization") {
    const Dims d{8, 8, 8};
    CHECK(loss_diffusion(DisplacementField::zeros(d, {1, 1, 1})) == 0.0);
    CHECK(loss_diffusion(testutil::uniform_field(d, {2.5, -1.0, 0.25})) == 0.0);

    // u_x(x) = x: (n-1)*n^2 unit squared differences over 3*n^3.
    std::vector<float> data(std::size_t(3 * d.voxels()), 0.0f);
    std::int64_t v = 0;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i, ++v)
                data[std::size_t(v)] = float(i);
    DisplacementField ramp(d, {1, 1, 1}, std::move(data));
    CHECK(loss_diffusion(ramp) == doctest::Approx(7.0 / 24.0).epsilon(1e-12));
}

TEST_CASE("total_loss: breakdown identities and the zero-configuration case") {
    const Dims d{6, 6, 6};
    Volume3 a = random_volume(d, 61);
    DisplacementField zero = DisplacementField::zeros(d, {1, 1, 1});
    LossConfig cfg;

    SUBCASE("identical inputs at zero field give ~0 total") {
        LossBreakdown b = total_loss(a, a, zero, cfg);
        CHECK(b.total == doctest::Approx(0.0).epsilon(1e-5));
        CHECK(b.l_reg == 0.0);
    }
    SUBCASE("breakdown identities hold exactly as computed") {
        Volume3 m = random_volume(d, 62);
        DisplacementField f = random_safe_field(d, 63);
        LossBreakdown b = total_loss(a, m, f, cfg);
        CHECK(b.l_sim == b.l_ic + cfg.gamma * b.l_gc);
        CHECK(b.total == b.l_sim + cfg.lambda * b.l_reg);
        CHECK(b.l_ic >= 0.0);
        CHECK(b.l_ic <= 2.0);
        CHECK(b.l_gc >= 0.0);
        CHECK(b.l_gc <= 2.0);
        CHECK(b.l_reg >= 0.0);
    }
    SUBCASE("gamma and lambda arithmetic") {
        // l_ic = 0.4, l_gc = 0.6, gamma = 0.5 -> l_sim = 0.7; lambda = 2,
        // l_reg = 0.1 -> total = 0.9 (checked through the struct identities).
        LossBreakdown b;
        b.l_ic = 0.4;
        b.l_gc = 0.6;
        b.l_sim = b.l_ic + 0.5 * b.l_gc;
        b.l_reg = 0.1;
        b.total = b.l_sim + 2.0 * b.l_reg;
        CHECK(b.l_sim == doctest::Approx(0.7).epsilon(1e-15));
        CHECK(b.total == doctest::Approx(0.9).epsilon(1e-15));
    }
}

TEST_CASE("total_loss_grad: stationary point, finite-difference oracle, reg-only form") {
    const Dims d{6, 6, 6};

    SUBCASE("fixed == moving at zero field with lambda=0 has ~zero gradient") {
        Volume3 a = random_volume(d, 71);
        LossConfig cfg;
        cfg.lambda = 0.0;
        auto [b, g] = total_loss_grad(a, a, DisplacementField::zeros(d, {1, 1, 1}), cfg);
        CHECK(b.total == doctest::Approx(0.0).epsilon(1e-5));
        for (float x : g.data())
            CHECK(std::abs(x) < 1e-5);
    }

    SUBCASE("finite differences validate every active-term combination") {
        LossConfig ic_only, gc_only, reg_only, all_terms;
        ic_only.use_gc = false;
        ic_only.lambda = 0.0;
        gc_only.use_ic = false;
        gc_only.gamma = 0.7;
        gc_only.lambda = 0.0;
        reg_only.use_ic = false;
        reg_only.use_gc = false;
        reg_only.lambda = 2.0;

        for (std::uint64_t seed = 1; seed <= 2; ++seed) {
            Volume3 fixed = random_volume(d, 1000 + seed);
            Volume3 moving = random_volume(d, 2000 + seed);
            DisplacementField field = random_safe_field(d, 3000 + seed);
            for (const LossConfig& cfg : {ic_only, gc_only, reg_only, all_terms}) {
                CHECK(grad_check_worst_margin(fixed, moving, field, cfg) <= 0.0);
            }
        }
    }

    SUBCASE("reg-only gradient of u_x = x is the forward-difference boundary form") {
        LossConfig cfg;
        cfg.use_ic = false;
        cfg.use_gc = false;
        cfg.lambda = 2.0;
        const Dims dd{4, 4, 4};
        const std::int64_t n = dd.voxels();
        std::vector<float> data(std::size_t(3 * n), 0.0f);
        std::int64_t v = 0;
        for (int k = 0; k < dd.z; ++k)
            for (int j = 0; j < dd.y; ++j)
                for (int i = 0; i < dd.x; ++i, ++v)
                    data[std::size_t(v)] = float(i);
        DisplacementField field(dd, {1, 1, 1}, std::move(data));
        Volume3 img = random_volume(dd, 77);

        auto [b, g] = total_loss_grad(img, img, field, cfg);
        const double edge = 2.0 * cfg.lambda / (3.0 * double(n));
        v = 0;
        for (int k = 0; k < dd.z; ++k)
            for (int j = 0; j < dd.y; ++j)
                for (int i = 0; i < dd.x; ++i, ++v) {
                    const double expect = i == 0 ? -edge : i == dd.x - 1 ? edge : 0.0;
                    CHECK(g.comp(0, v) == doctest::Approx(expect).epsilon(1e-7));
                    CHECK(g.comp(1, v) == 0.0f);
                    CHECK(g.comp(2, v) == 0.0f);
                }
        CHECK(grad_check_worst_margin(img, img, field, cfg) <= 0.0);
    }
}
