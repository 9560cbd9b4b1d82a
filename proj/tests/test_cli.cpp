#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "gradreg/metrics.h"
#include "gradreg/nifti_io.h"
#include "gradreg/registration.h"
#include "gradreg/synth.h"
#include "gradreg/volume_ops.h"
#include "test_util.h"

using namespace gradreg;
using nlohmann::json;
using testutil::cli_path;
using testutil::CmdResult;
using testutil::run_cmd;
using testutil::TempDir;

namespace {

std::string q(const std::string& s) {
    return "'" + s + "'";
}

json parse_stdout(const CmdResult& r) {
    REQUIRE(!r.out.empty());
    return json::parse(r.out);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

// One shared synthetic problem on disk for the CLI cases.
struct Fixture {
    TempDir tmp{"cli"};
    std::string fixed, moving, field, labels;

    Fixture() {
        fixed = tmp.file("fixed.nii");
        moving = tmp.file("moving.nii");
        field = tmp.file("gt_field.nii");
        labels = tmp.file("labels.nii");
        CmdResult r = run_cmd(cli_path() + " synth --size 16 --seed 5 --max-disp 1 --out-fixed " +
                              q(fixed) + " --out-moving " + q(moving) + " --out-field " + q(field) +
                              " --out-labels " + q(labels) + " 2>/dev/null");
        REQUIRE(r.exit_code == 0);
    }
};

}  // namespace

TEST_CASE("cli synth: determinism, reports, max-disp 0") {
    TempDir tmp("cli_synth");
    const std::string base = cli_path() + " synth --size 16 --seed 9 --max-disp 1 ";

    SUBCASE("same seed twice gives bit-identical outputs") {
        CmdResult r1 = run_cmd(base + "--out-fixed " + q(tmp.file("f1.nii")) + " --out-moving " +
                               q(tmp.file("m1.nii")) + " --out-field " + q(tmp.file("u1.nii")) +
                               " 2>/dev/null");
        CmdResult r2 = run_cmd(base + "--out-fixed " + q(tmp.file("f2.nii")) + " --out-moving " +
                               q(tmp.file("m2.nii")) + " --out-field " + q(tmp.file("u2.nii")) +
                               " 2>/dev/null");
        CHECK(r1.exit_code == 0);
        CHECK(r2.exit_code == 0);
        CHECK(read_file(tmp.file("f1.nii")) == read_file(tmp.file("f2.nii")));
        CHECK(read_file(tmp.file("m1.nii")) == read_file(tmp.file("m2.nii")));
        CHECK(read_file(tmp.file("u1.nii")) == read_file(tmp.file("u2.nii")));
        json rep = parse_stdout(r1);
        CHECK(rep.at("schema_version") == 1);
        CHECK(rep.at("command") == "synth");
    }
    SUBCASE("max-disp 0 gives identical fixed and moving and a zero field") {
        CmdResult r = run_cmd(cli_path() + " synth --size 16 --seed 3 --max-disp 0 --out-fixed " +
                              q(tmp.file("f.nii")) + " --out-moving " + q(tmp.file("m.nii")) +
                              " --out-field " + q(tmp.file("u.nii")) + " 2>/dev/null");
        CHECK(r.exit_code == 0);
        Volume3 f = read_volume(tmp.file("f.nii"));
        Volume3 m = read_volume(tmp.file("m.nii"));
        CHECK(f.data() == m.data());
        DisplacementField u = read_field(tmp.file("u.nii"));
        for (float x : u.data())
            CHECK(x == 0.0f);
        CHECK(parse_stdout(r).at("field_ndv_percent") == 0.0);
    }
    SUBCASE("parameter bounds exit 2") {
        CmdResult r = run_cmd(cli_path() + " synth --size 8 --out-fixed " + q(tmp.file("f.nii")) +
                              " --out-moving " + q(tmp.file("m.nii")) + " --out-field " +
                              q(tmp.file("u.nii")) + " 2>/dev/null");
        CHECK(r.exit_code == 2);
    }
}

TEST_CASE("cli warp: identity, labels, shape mismatch") {
    Fixture fx;
    const std::string zero_field = fx.tmp.file("zero.nii");
    write_field(DisplacementField::zeros({16, 16, 16}, {1, 1, 1}), zero_field);

    SUBCASE("zero field reproduces the input image bit-exactly") {
        CmdResult r = run_cmd(cli_path() + " warp --image " + q(fx.moving) + " --field " +
                              q(zero_field) + " --out " + q(fx.tmp.file("warped.nii")) +
                              " 2>/dev/null");
        CHECK(r.exit_code == 0);
        CHECK(read_volume(fx.tmp.file("warped.nii")).data() == read_volume(fx.moving).data());
    }
    SUBCASE("label warping emits only input labels") {
        CmdResult r = run_cmd(cli_path() + " warp --labels --image " + q(fx.labels) + " --field " +
                              q(fx.field) + " --out " + q(fx.tmp.file("warped_labels.nii")) +
                              " 2>/dev/null");
        CHECK(r.exit_code == 0);
        LabelMap in = read_labels(fx.labels);
        LabelMap out = read_labels(fx.tmp.file("warped_labels.nii"));
        for (std::int32_t l : out.labels())
            CHECK(std::find(in.labels().begin(), in.labels().end(), l) != in.labels().end());
    }
    SUBCASE("dims mismatch exits 2") {
        const std::string small = fx.tmp.file("small.nii");
        write_field(DisplacementField::zeros({8, 8, 8}, {1, 1, 1}), small);
        CmdResult r = run_cmd(cli_path() + " warp --image " + q(fx.moving) + " --field " +
                              q(small) + " --out " + q(fx.tmp.file("x.nii")) + " 2>/dev/null");
        CHECK(r.exit_code == 2);
    }
    SUBCASE("missing input exits 1") {
        CmdResult r = run_cmd(cli_path() + " warp --image " + q(fx.tmp.file("nope.nii")) +
                              " --field " + q(zero_field) + " --out " + q(fx.tmp.file("x.nii")) +
                              " 2>/dev/null");
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("cli evaluate: self-comparison identities and reflection ndv") {
    Fixture fx;
    const std::string zero_field = fx.tmp.file("zero.nii");
    write_field(DisplacementField::zeros({16, 16, 16}, {1, 1, 1}), zero_field);

    SUBCASE("labels vs themselves at zero field") {
        CmdResult r = run_cmd(cli_path() + " evaluate --fixed-labels " + q(fx.labels) +
                              " --warped-labels " + q(fx.labels) + " --field " + q(zero_field) +
                              " --fixed " + q(fx.fixed) + " --moved " + q(fx.fixed) +
                              " --json-out " + q(fx.tmp.file("report.json")) + " 2>/dev/null");
        CHECK(r.exit_code == 0);
        json rep = parse_stdout(r);
        const json& m = rep.at("metrics");
        CHECK(m.at("dice_mean") == 1.0);
        CHECK(m.at("hd95_mean") == 0.0);
        CHECK(m.at("ndv_percent") == 0.0);
        CHECK(m.at("gc_score").get<double>() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(json::parse(read_file(fx.tmp.file("report.json"))) == rep);
        // Ranges per the report invariants.
        for (const auto& [key, value] : m.at("dice_per_label").items()) {
            CHECK(value.get<double>() >= 0.0);
            CHECK(value.get<double>() <= 1.0);
        }
    }
    SUBCASE("reflection field reports ndv 100") {
        const Dims d{16, 16, 16};
        std::vector<float> data(std::size_t(3 * d.voxels()), 0.0f);
        std::int64_t v = 0;
        for (int k = 0; k < d.z; ++k)
            for (int j = 0; j < d.y; ++j)
                for (int i = 0; i < d.x; ++i, ++v)
                    data[std::size_t(v)] = float((d.x - 1 - i) - i);
        const std::string refl = fx.tmp.file("reflect.nii");
        write_field(DisplacementField(d, {1, 1, 1}, std::move(data)), refl);
        CmdResult r =
            run_cmd(cli_path() + " evaluate --field " + q(refl) + " 2>/dev/null");
        CHECK(r.exit_code == 0);
        CHECK(parse_stdout(r).at("metrics").at("ndv_percent") == 100.0);
    }
    SUBCASE("tre via landmark files") {
        std::ofstream(fx.tmp.file("f.csv")) << "x,y,z\n2,3,4\n";
        std::ofstream(fx.tmp.file("m.csv")) << "x,y,z\n5,7,4\n";
        CmdResult r = run_cmd(cli_path() + " evaluate --fixed-lms " + q(fx.tmp.file("f.csv")) +
                              " --moving-lms " + q(fx.tmp.file("m.csv")) + " --field " +
                              q(zero_field) + " 2>/dev/null");
        CHECK(r.exit_code == 0);
        CHECK(parse_stdout(r).at("metrics").at("tre_mean").get<double>() ==
              doctest::Approx(5.0).epsilon(1e-7));
    }
    SUBCASE("no inputs exits 2") {
        CmdResult r = run_cmd(cli_path() + " evaluate 2>/dev/null");
        CHECK(r.exit_code == 2);
    }
}

TEST_CASE("cli register: identity pair, config handling") {
    Fixture fx;

    SUBCASE("identical fixed/moving yields a near-zero field") {
        CmdResult r = run_cmd(cli_path() + " register --fixed " + q(fx.fixed) + " --moving " +
                              q(fx.fixed) + " --out-field " + q(fx.tmp.file("out.nii")) +
                              " 2>/dev/null");
        CHECK(r.exit_code == 0);
        DisplacementField out = read_field(fx.tmp.file("out.nii"));
        double mean = 0.0;
        for (std::int64_t v = 0; v < out.voxels(); ++v) {
            const double dx = out.comp(0, v), dy = out.comp(1, v), dz = out.comp(2, v);
            mean += std::sqrt(dx * dx + dy * dy + dz * dz);
        }
        mean /= double(out.voxels());
        CHECK(mean < 0.05);
        json rep = parse_stdout(r);
        CHECK(rep.at("schema_version") == 1);
        CHECK(rep.at("levels").size() == 3);
        for (const auto& level : rep.at("levels"))
            CHECK(level.at("final_loss").contains("total"));
    }
    SUBCASE("unknown config key exits 2 naming the key") {
        std::ofstream(fx.tmp.file("bad.json")) << R"({"loss": {"gamme": 0.5}})";
        CmdResult r = run_cmd(cli_path() + " register --fixed " + q(fx.fixed) + " --moving " +
                              q(fx.moving) + " --out-field " + q(fx.tmp.file("o.nii")) +
                              " --config " + q(fx.tmp.file("bad.json")) + " 2>" +
                              q(fx.tmp.file("err.txt")));
        CHECK(r.exit_code == 2);
        CHECK(read_file(fx.tmp.file("err.txt")).find("gamme") != std::string::npos);
    }
    SUBCASE("config echo lands in the report") {
        std::ofstream(fx.tmp.file("cfg.json"))
            << R"({"iters_per_level": [4, 4, 4], "loss": {"gamma": 0.25}})";
        CmdResult r = run_cmd(cli_path() + " register --fixed " + q(fx.fixed) + " --moving " +
                              q(fx.moving) + " --out-field " + q(fx.tmp.file("o.nii")) +
                              " --config " + q(fx.tmp.file("cfg.json")) + " 2>/dev/null");
        CHECK(r.exit_code == 0);
        json rep = parse_stdout(r);
        CHECK(rep.at("config").at("loss").at("gamma") == 0.25);
        CHECK(rep.at("config").at("iters_per_level") == json::array({4, 4, 4}));
    }
    SUBCASE("shape mismatch exits 2") {
        TempDir other("cli_other");
        const std::string small = other.file("small.nii");
        run_cmd(cli_path() + " synth --size 24 --seed 1 --max-disp 1 --out-fixed " + q(small) +
                " --out-moving " + q(other.file("m.nii")) + " --out-field " +
                q(other.file("u.nii")) + " 2>/dev/null");
        CmdResult r = run_cmd(cli_path() + " register --fixed " + q(fx.fixed) + " --moving " +
                              q(small) + " --out-field " + q(other.file("o.nii")) + " 2>/dev/null");
        CHECK(r.exit_code == 2);
    }
    SUBCASE("divergent configuration exits 3") {
        std::ofstream(fx.tmp.file("wild.json"))
            << R"({"iters_per_level": [5, 5, 5], "optim": {"lr": 1e300}})";
        CmdResult r = run_cmd(cli_path() + " register --fixed " + q(fx.fixed) + " --moving " +
                              q(fx.moving) + " --out-field " + q(fx.tmp.file("o.nii")) +
                              " --config " + q(fx.tmp.file("wild.json")) + " 2>/dev/null");
        CHECK(r.exit_code == 3);
    }
}

TEST_CASE("cli pipeline matches the in-process pipeline") {
    Fixture fx;
    const std::string env = "GRADREG_THREADS=1 ";
    const std::string out_field = fx.tmp.file("reg_field.nii");
    const std::string moved = fx.tmp.file("moved.nii");
    const std::string cfg_path = fx.tmp.file("cfg.json");
    std::ofstream(cfg_path) << R"({"iters_per_level": [10, 10, 10]})";

    CmdResult r = run_cmd(env + cli_path() + " register --fixed " + q(fx.fixed) + " --moving " +
                          q(fx.moving) + " --out-field " + q(out_field) + " --moved-out " +
                          q(moved) + " --config " + q(cfg_path) + " 2>/dev/null");
    REQUIRE(r.exit_code == 0);

    // In-process reference.
    Volume3 fixed = read_volume(fx.fixed);
    Volume3 moving = read_volume(fx.moving);
    RegistrationConfig cfg;
    cfg.iters_per_level = {10, 10, 10};
    RegistrationResult res = register_volumes(fixed, moving, cfg);

    DisplacementField cli_field = read_field(out_field);
    CHECK(cli_field.data() == res.field.data());

    Volume3 cli_moved = read_volume(moved);
    Volume3 ref_moved = warp_image(moving, res.field);
    CHECK(cli_moved.data() == ref_moved.data());

    // evaluate on the CLI field equals in-process metrics exactly.
    CmdResult ev = run_cmd(env + cli_path() + " evaluate --field " + q(out_field) + " --fixed " +
                           q(fx.fixed) + " --moved " + q(moved) + " 2>/dev/null");
    REQUIRE(ev.exit_code == 0);
    json rep = parse_stdout(ev);
    CHECK(rep.at("metrics").at("ndv_percent").get<double>() == ndv(res.field));
    CHECK(rep.at("metrics").at("gc_score").get<double>() == gc_score(fixed, ref_moved));
}
