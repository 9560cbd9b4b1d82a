// gradreg: deformable 3D registration by direct displacement-field
// optimization, plus warping, evaluation and synthetic-data subcommands.
//
// Exit codes: 0 success, 1 I/O, 2 shape/config, 3 numerical divergence.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradreg/config_io.h"
#include "gradreg/errors.h"
#include "gradreg/metrics.h"
#include "gradreg/nifti_io.h"
#include "gradreg/registration.h"
#include "gradreg/synth.h"
#include "gradreg/volume_ops.h"

namespace {

using nlohmann::json;
using namespace gradreg;

constexpr int kSchemaVersion = 1;

void emit(const json& report) {
    std::cout << report.dump(2) << "\n";
}

int run_register(const std::string& fixed_path, const std::string& moving_path,
                 const std::string& out_field, const std::string& config_path,
                 const std::string& init_field, const std::string& moved_out,
                 std::optional<std::uint64_t> seed) {
    NiftiHeader fixed_header;
    Volume3 fixed = read_volume(fixed_path, &fixed_header);
    Volume3 moving = read_volume(moving_path);

    RegistrationConfig cfg;
    if (!config_path.empty())
        cfg = load_config_file(config_path);
    if (seed)
        cfg.seed = *seed;

    std::optional<DisplacementField> init;
    if (!init_field.empty())
        init = read_field(init_field);

    RegistrationResult result =
        register_volumes(fixed, moving, cfg, init ? &*init : nullptr);

    write_field(result.field, out_field, &fixed_header);
    if (!moved_out.empty())
        write_volume(warp_image(moving, result.field), moved_out, &fixed_header);

    json levels = json::array();
    for (const LevelTrace& t : result.levels) {
        levels.push_back({{"level", t.level},
                          {"dims", {t.dims.x, t.dims.y, t.dims.z}},
                          {"iterations_run", t.iterations_run},
                          {"converged", t.converged},
                          {"best_total", t.best_total},
                          {"final_loss", breakdown_to_json(t.history.back())}});
    }
    json report{{"schema_version", kSchemaVersion},
                {"command", "register"},
                {"config", config_to_json(cfg)},
                {"converged", result.converged},
                {"levels", levels},
                {"outputs", {{"field", out_field}}}};
    if (!moved_out.empty())
        report["outputs"]["moved"] = moved_out;
    emit(report);

    std::cerr << "registered " << moving_path << " -> " << fixed_path << ": final total loss "
              << result.levels.back().history.back().total << " after "
              << result.levels.back().iterations_run << " iterations at full resolution\n";
    return 0;
}

int run_warp(const std::string& image_path, const std::string& field_path,
             const std::string& out_path, bool labels) {
    DisplacementField field = read_field(field_path);
    json report{{"schema_version", kSchemaVersion}, {"command", "warp"},
                {"outputs", {{"out", out_path}}}};
    if (labels) {
        NiftiHeader h;
        LabelMap in = read_labels(image_path, &h);
        write_labels(warp_labels(in, field), out_path, &h);
    } else {
        NiftiHeader h;
        Volume3 in = read_volume(image_path, &h);
        write_volume(warp_image(in, field), out_path, &h);
    }
    emit(report);
    std::cerr << "warped " << image_path << " by " << field_path << " -> " << out_path
              << (labels ? " (nearest-neighbor)\n" : " (trilinear)\n");
    return 0;
}

int run_evaluate(const std::string& fixed_labels, const std::string& warped_labels,
                 const std::string& moving_labels, const std::string& field_path,
                 const std::string& fixed_lms, const std::string& moving_lms,
                 const std::string& fixed_path, const std::string& moved_path,
                 const std::string& json_out) {
    json metrics = json::object();

    std::optional<DisplacementField> field;
    if (!field_path.empty())
        field = read_field(field_path);

    if (!fixed_labels.empty()) {
        LabelMap ref = read_labels(fixed_labels);
        std::optional<LabelMap> warped;
        if (!warped_labels.empty()) {
            warped = read_labels(warped_labels);
        } else if (!moving_labels.empty()) {
            if (!field)
                throw std::invalid_argument("--moving-labels needs --field");
            warped = warp_labels(read_labels(moving_labels), *field);
        }
        if (warped) {
            DiceResult dc = dice(ref, *warped);
            Hd95Result hd = hd95(ref, *warped);
            json dice_labels = json::object(), hd_labels = json::object();
            for (const auto& [label, value] : dc.per_label)
                dice_labels[std::to_string(label)] = value;
            for (const auto& [label, value] : hd.per_label)
                hd_labels[std::to_string(label)] = value;
            metrics["dice_mean"] = dc.mean;
            metrics["dice_per_label"] = dice_labels;
            metrics["hd95_mean"] = hd.mean;
            metrics["hd95_per_label"] = hd_labels;
            if (!hd.skipped.empty())
                metrics["hd95_skipped_labels"] = hd.skipped;
        }
    }

    if (!fixed_lms.empty() || !moving_lms.empty()) {
        if (fixed_lms.empty() || moving_lms.empty() || !field)
            throw std::invalid_argument("TRE needs --fixed-lms, --moving-lms and --field");
        LandmarkSet flm = read_landmarks(fixed_lms);
        LandmarkSet mlm = read_landmarks(moving_lms);
        metrics["tre_mean"] = tre(flm, mlm, *field, field->spacing());
    }

    if (field) {
        metrics["ndv_percent"] = ndv(*field);
        metrics["diagnostics"] = {{"neg_jacobian_percent", negative_jacobian_percent(*field)}};
    }

    if (!fixed_path.empty() && !moved_path.empty()) {
        Volume3 fixed = read_volume(fixed_path);
        Volume3 moved = read_volume(moved_path);
        metrics["gc_score"] = gc_score(fixed, moved);
    }

    if (metrics.empty())
        throw std::invalid_argument("evaluate: no metric inputs given");

    json report{{"schema_version", kSchemaVersion}, {"command", "evaluate"}, {"metrics", metrics}};
    emit(report);
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out)
            throw io_error("cannot open '" + json_out + "' for writing");
        out << report.dump(2) << "\n";
    }
    std::cerr << "evaluated " << metrics.size() << " metric group(s)";
    if (metrics.contains("dice_mean"))
        std::cerr << ", dice_mean " << metrics["dice_mean"].get<double>();
    if (metrics.contains("ndv_percent"))
        std::cerr << ", ndv " << metrics["ndv_percent"].get<double>() << "%";
    std::cerr << "\n";
    return 0;
}

int run_synth(int size, std::uint64_t seed, double max_disp, const std::string& out_fixed,
              const std::string& out_moving, const std::string& out_field,
              const std::string& out_labels) {
    SynthConfig cfg;
    cfg.size = size;
    cfg.seed = seed;
    cfg.max_disp = max_disp;
    cfg.make_labels = !out_labels.empty();

    SynthData data = synthesize(cfg);
    write_volume(data.fixed, out_fixed);
    write_volume(data.moving, out_moving);
    write_field(data.field, out_field);
    if (data.labels)
        write_labels(*data.labels, out_labels);

    json report{{"schema_version", kSchemaVersion},
                {"command", "synth"},
                {"size", size},
                {"seed", seed},
                {"max_disp", max_disp},
                {"field_ndv_percent", data.field_ndv_percent},
                {"outputs", {{"fixed", out_fixed}, {"moving", out_moving}, {"field", out_field}}}};
    if (!out_labels.empty())
        report["outputs"]["labels"] = out_labels;
    emit(report);
    std::cerr << "synthesized " << size << "^3 pair, seed " << seed << ", max displacement "
              << max_disp << " voxels, field NDV " << data.field_ndv_percent << "%\n";
    return 0;
}

void print_error(int code, const std::string& reason) {
    json err{{"schema_version", kSchemaVersion}, {"error", reason}, {"exit_code", code}};
    std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradreg: 3D deformable registration by displacement-field optimization"};
    app.require_subcommand(1);

    // register
    auto* reg = app.add_subcommand("register",
                                   "Optimize a displacement field aligning moving onto fixed");
    std::string reg_fixed, reg_moving, reg_out_field, reg_config, reg_init, reg_moved_out;
    std::optional<std::uint64_t> reg_seed;
    reg->add_option("--fixed", reg_fixed, "Fixed image (.nii/.nii.gz)")->required();
    reg->add_option("--moving", reg_moving, "Moving image")->required();
    reg->add_option("--out-field", reg_out_field, "Output displacement field")->required();
    reg->add_option("--config", reg_config, "JSON config file");
    reg->add_option("--init-field", reg_init, "Initial displacement field (warm start)");
    reg->add_option("--moved-out", reg_moved_out, "Also write the warped moving image");
    reg->add_option("--seed", reg_seed, "Seed override");

    // warp
    auto* warp = app.add_subcommand("warp", "Apply a displacement field to an image or label map");
    std::string warp_image_path, warp_field, warp_out;
    bool warp_is_labels = false;
    warp->add_option("--image", warp_image_path, "Input image or label map")->required();
    warp->add_option("--field", warp_field, "Displacement field")->required();
    warp->add_option("--out", warp_out, "Output path")->required();
    warp->add_flag("--labels", warp_is_labels, "Treat input as labels (nearest-neighbor)");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Compute registration quality metrics");
    std::string ev_fixed_labels, ev_warped_labels, ev_moving_labels, ev_field, ev_fixed_lms,
        ev_moving_lms, ev_fixed, ev_moved, ev_json_out;
    eval->add_option("--fixed-labels", ev_fixed_labels, "Reference label map");
    eval->add_option("--warped-labels", ev_warped_labels, "Already-warped label map");
    eval->add_option("--moving-labels", ev_moving_labels, "Moving label map (warped via --field)");
    eval->add_option("--field", ev_field, "Displacement field (NDV, TRE, label warping)");
    eval->add_option("--fixed-lms", ev_fixed_lms, "Fixed landmarks CSV");
    eval->add_option("--moving-lms", ev_moving_lms, "Moving landmarks CSV");
    eval->add_option("--fixed", ev_fixed, "Fixed image (GC score)");
    eval->add_option("--moved", ev_moved, "Moved image (GC score)");
    eval->add_option("--json-out", ev_json_out, "Also write the report to this path");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic registration problem");
    int sy_size = 32;
    std::uint64_t sy_seed = 0;
    double sy_max_disp = 3.0;
    std::string sy_fixed, sy_moving, sy_field, sy_labels;
    synth->add_option("--size", sy_size, "Cube edge in voxels (>= 16)");
    synth->add_option("--seed", sy_seed, "RNG seed");
    synth->add_option("--max-disp", sy_max_disp, "Peak displacement magnitude, voxels");
    synth->add_option("--out-fixed", sy_fixed, "Output fixed image")->required();
    synth->add_option("--out-moving", sy_moving, "Output moving image")->required();
    synth->add_option("--out-field", sy_field, "Output ground-truth field")->required();
    synth->add_option("--out-labels", sy_labels, "Optional label map output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e);  // --help and friends
        std::stringstream ss;
        ss << e.what();
        print_error(2, ss.str());
        return 2;
    }

    try {
        if (*reg)
            return run_register(reg_fixed, reg_moving, reg_out_field, reg_config, reg_init,
                                reg_moved_out, reg_seed);
        if (*warp)
            return run_warp(warp_image_path, warp_field, warp_out, warp_is_labels);
        if (*eval)
            return run_evaluate(ev_fixed_labels, ev_warped_labels, ev_moving_labels, ev_field,
                                ev_fixed_lms, ev_moving_lms, ev_fixed, ev_moved, ev_json_out);
        if (*synth)
            return run_synth(sy_size, sy_seed, sy_max_disp, sy_fixed, sy_moving, sy_field,
                             sy_labels);
    } catch (const io_error& e) {
        print_error(1, e.what());
        return 1;
    } catch (const divergence_error& e) {
        print_error(3, e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        print_error(2, e.what());
        return 2;
    } catch (const std::exception& e) {
        print_error(1, e.what());
        return 1;
    }
    return 0;
}
