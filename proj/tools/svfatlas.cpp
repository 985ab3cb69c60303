// svfatlas: command-line front end.
//
//   svfatlas synth       [--config c] OUTDIR
//   svfatlas build-atlas [--config c] MANIFEST OUTDIR
//   svfatlas register    [--config c] ATLAS IMAGE OUTDIR
//   svfatlas evaluate    MANIFEST MAPSDIR [flags]
//   svfatlas invert      [--config c] MAPFILE OUTFILE
//
// Exit codes: 0 success, 1 runtime / numeric / I/O / validation failure,
// 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "svfatlas/config.hpp"
#include "svfatlas/errors.hpp"
#include "svfatlas/eval.hpp"
#include "svfatlas/inverse.hpp"
#include "svfatlas/io.hpp"
#include "svfatlas/optim.hpp"
#include "svfatlas/svf.hpp"
#include "svfatlas/synth.hpp"
#include "svfatlas/losses.hpp"

namespace fs = std::filesystem;
using namespace svfatlas;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

ConfigMap optional_config(const std::string &path) { return path.empty() ? ConfigMap{} : load_config(path); }

std::string indexed(const char *prefix, std::size_t i, const char *suffix = ".afraw") {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03zu", i);
    return std::string(prefix) + buf + suffix;
}

// Creates `dir` (and nothing above it): a missing parent is an I/O error.
void ensure_output_dir(const fs::path &dir) {
    std::error_code ec;
    if (fs::is_directory(dir, ec)) return;
    if (!fs::create_directory(dir, ec) || ec) {
        throw IoError("cannot create output directory '" + dir.string() + "'" +
                      (ec ? ": " + ec.message() : std::string()));
    }
}

std::vector<ScalarField> load_images(const std::vector<ManifestEntry> &entries, bool normalize) {
    std::vector<ScalarField> images;
    for (const auto &e : entries) {
        ScalarField img = read_scalar(e.image);
        images.push_back(normalize ? normalize_intensity(img) : std::move(img));
    }
    std::string mismatched;
    for (std::size_t i = 1; i < images.size(); ++i) {
        if (images[i].shape != images[0].shape) mismatched += " " + entries[i].image.string();
    }
    if (!mismatched.empty()) {
        throw InvalidInput("manifest members differ in shape from " + entries[0].image.string() + ":" + mismatched);
    }
    return images;
}

int cmd_synth(const std::string &config, const fs::path &outdir) {
    const SynthConfig sc = to_synth_config(optional_config(config));
    const SynthCohort syn = generate(sc);
    ensure_output_dir(outdir);
    std::vector<ManifestEntry> manifest;
    for (std::size_t i = 0; i < syn.cohort.size(); ++i) {
        write_field(outdir / indexed("img_", i), syn.cohort.images[i]);
        write_field(outdir / indexed("seg_", i), syn.cohort.labels[i]);
        write_map(outdir / indexed("gt_fwd_", i), syn.fwd[i]);
        write_map(outdir / indexed("gt_inv_", i), syn.inv[i]);
        manifest.push_back({indexed("img_", i), indexed("seg_", i)});
    }
    write_field(outdir / "template.afraw", syn.template_image);
    write_field(outdir / "template_seg.afraw", syn.template_labels);
    export_pgm(syn.template_image, outdir / "template.pgm");
    write_manifest(outdir / "manifest.txt", manifest);
    std::cout << "wrote " << syn.cohort.size() << " images to " << outdir.string() << "\n";
    return 0;
}

int cmd_build_atlas(const std::string &config, const fs::path &manifest_path, const fs::path &outdir) {
    const RunConfig rc = to_run_config(optional_config(config));
    const auto entries = read_manifest(manifest_path);
    Cohort cohort;
    cohort.images = load_images(entries, rc.normalize);
    cohort.validate();
    ensure_output_dir(outdir);
    const BuildResult result = run_atlas_build(cohort, rc.optim, [&](int epoch, const ScalarField &atlas) {
        export_pgm(atlas, outdir / ("atlas_epoch" + std::to_string(epoch) + ".pgm"));
    });
    const AtlasState &state = result.state;
    write_field(outdir / "atlas.afraw", state.atlas());
    export_pgm(state.atlas(), outdir / "atlas.pgm");
    const int K = rc.optim.squaring_steps;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const VectorField &v = state.velocities()[i];
        write_field(outdir / indexed("v_", i), v);
        write_map(outdir / indexed("phi_fwd_", i), integrate(v, K));
        write_map(outdir / indexed("phi_inv_", i), integrate_inverse(v, K));
    }
    write_epoch_log(outdir / "train_log.csv", result.log);
    const EpochLog &last = result.log.back();
    std::cout << "epochs " << last.epoch << " final_total " << format_double(last.total) << " folds "
              << format_double(last.folds) << "\n";
    return 0;
}

int cmd_register(const std::string &config, const fs::path &atlas_path, const fs::path &image_path,
                 const fs::path &outdir) {
    const RunConfig rc = to_register_config(optional_config(config));
    ScalarField atlas = read_scalar(atlas_path);
    ScalarField image = read_scalar(image_path);
    if (rc.normalize) {
        atlas = normalize_intensity(atlas);
        image = normalize_intensity(image);
    }
    if (atlas.shape != image.shape) {
        throw InvalidInput("atlas " + atlas_path.string() + " and image " + image_path.string() + " differ in shape");
    }
    ensure_output_dir(outdir);
    const RegistrationResult r = register_image(atlas, image, rc.optim);
    write_field(outdir / "v.afraw", r.velocity);
    write_map(outdir / "phi_fwd.afraw", r.fwd);
    write_map(outdir / "phi_inv.afraw", r.inv);
    write_epoch_log(outdir / "register_log.csv", r.log);
    const ScalarField warped = warp(atlas, r.inv);
    export_pgm(warped, outdir / "warped_atlas.pgm");
    std::cout << "warped_mse " << format_double(mse(warped, image)) << "\n";
    return 0;
}

struct EvaluateFlags {
    bool pairwise_atlas = false;
    bool vote_atlas_seg = false;
    bool identity = false;
    std::string atlas_seg;
    std::string fwd_prefix = "phi_fwd_";
    std::string inv_prefix = "phi_inv_";
    std::string out;
};

int cmd_evaluate(const fs::path &manifest_path, const fs::path &maps_dir, const EvaluateFlags &f) {
    const auto entries = read_manifest(manifest_path);
    std::vector<std::string> missing;
    for (const auto &e : entries) {
        if (e.label.empty()) missing.push_back("(no label listed for " + e.image.string() + ")");
        else if (!fs::exists(e.label)) missing.push_back(e.label.string());
    }
    std::vector<fs::path> fwd_paths, inv_paths;
    if (!f.identity) {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            fwd_paths.push_back(maps_dir / indexed(f.fwd_prefix.c_str(), i));
            inv_paths.push_back(maps_dir / indexed(f.inv_prefix.c_str(), i));
            if (!fs::exists(fwd_paths.back())) missing.push_back(fwd_paths.back().string());
            if (!fs::exists(inv_paths.back())) missing.push_back(inv_paths.back().string());
        }
    }
    if (!f.atlas_seg.empty() && !fs::exists(f.atlas_seg)) missing.push_back(f.atlas_seg);
    if (!missing.empty()) {
        std::string msg = "missing evaluation inputs:";
        for (const auto &m : missing) msg += "\n  " + m;
        throw InvalidInput(msg);
    }
    std::vector<LabelField> segs;
    std::vector<DeformationMap> fwd, inv;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        segs.push_back(read_labels(entries[i].label));
        if (f.identity) {
            fwd.push_back(DeformationMap::identity(segs.back().shape));
            inv.push_back(DeformationMap::identity(segs.back().shape));
        } else {
            fwd.push_back(read_map(fwd_paths[i]));
            inv.push_back(read_map(inv_paths[i]));
        }
        if (segs[i].shape != segs[0].shape || fwd[i].shape() != segs[0].shape || inv[i].shape() != segs[0].shape) {
            throw InvalidInput("member " + std::to_string(i) + " (" + entries[i].label.string() +
                               "): label / map shapes disagree with member 0");
        }
    }
    EvalOptions opt;
    opt.pairwise_atlas = f.pairwise_atlas;
    opt.vote_atlas_seg = f.vote_atlas_seg;
    if (!f.atlas_seg.empty()) opt.atlas_seg = read_labels(f.atlas_seg);
    const EvalReport report = evaluate(segs, fwd, inv, opt);
    const fs::path out = f.out.empty() ? maps_dir / "eval.csv" : fs::path(f.out);
    write_eval_csv(out, report);
    fs::path notes = out;
    notes.replace_extension(".notes.txt");
    std::ofstream n(notes);
    n << "Dice per structure k = 1..K (0 is background); both-empty structures score 1.\n"
      << "mean/std: per-image (or per-target / per-pair) values first, then population std across them.\n"
      << "'all' rows average the structures within each sample before aggregating.\n"
      << "Plurality vote over label fields; ties go to the smallest label.\n"
      << "folds_per_map: interior voxels with negative Jacobian determinant, mean over the Phi_{1,0} maps.\n";
    if (report.atlas_seg_from_vote) {
        n << "d_image uses an atlas segmentation voted from the warped training labels, not an independent one.\n";
    }
    std::cout << "d_bridge_all " << format_double(report.d_bridge.all_mean) << "\n";
    return 0;
}

int cmd_invert(const std::string &config, const fs::path &map_path, const fs::path &out_path) {
    const InverseOptions opt = to_inverse_options(optional_config(config));
    const DeformationMap map = read_map(map_path);
    try {
        const InverseResult r = numeric_inverse(map, opt);
        write_map(out_path, r.inverse);
        std::cout << "residual " << format_double(r.residual) << "\n";
    } catch (const NonInvertibleMap &e) {
        std::cout << "residual " << format_double(e.residual()) << "\n";
        throw;
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Groupwise diffeomorphic atlas building"};
    app.require_subcommand(1);

    std::string config;
    std::string a, b, c;

    auto *synth = app.add_subcommand("synth", "Generate a synthetic cohort with ground-truth maps");
    synth->add_option("--config", config, "Config file");
    synth->add_option("outdir", a, "Output directory")->required();

    auto *build = app.add_subcommand("build-atlas", "Build an atlas from a manifest of images");
    build->add_option("--config", config, "Config file");
    build->add_option("manifest", a, "Manifest file")->required();
    build->add_option("outdir", b, "Output directory")->required();

    auto *reg = app.add_subcommand("register", "Register one image to a frozen atlas");
    reg->add_option("--config", config, "Config file");
    reg->add_option("atlas", a, "Atlas field")->required();
    reg->add_option("image", b, "Image field")->required();
    reg->add_option("outdir", c, "Output directory")->required();

    EvaluateFlags ef;
    auto *eval = app.add_subcommand("evaluate", "Score maps against label fields");
    eval->add_option("manifest", a, "Manifest with label paths")->required();
    eval->add_option("mapsdir", b, "Directory holding the maps")->required();
    eval->add_flag("--pairwise-atlas", ef.pairwise_atlas, "Add the pairwise atlas-space measure");
    auto *seg_opt = eval->add_option("--atlas-seg", ef.atlas_seg, "Atlas segmentation for d_image");
    eval->add_flag("--vote-atlas-seg", ef.vote_atlas_seg, "Derive the atlas segmentation for d_image by voting")
        ->excludes(seg_opt);
    eval->add_flag("--identity", ef.identity, "Use identity maps instead of map files");
    eval->add_option("--fwd-prefix", ef.fwd_prefix, "File prefix of Phi_{0,1} maps");
    eval->add_option("--inv-prefix", ef.inv_prefix, "File prefix of Phi_{1,0} maps");
    eval->add_option("--out", ef.out, "Output CSV (default MAPSDIR/eval.csv)");

    auto *inv = app.add_subcommand("invert", "Numerically invert a deformation map");
    inv->add_option("--config", config, "Config file");
    inv->add_option("mapfile", a, "Input map")->required();
    inv->add_option("outfile", b, "Output map")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(config, a);
        if (*build) return cmd_build_atlas(config, a, b);
        if (*reg) return cmd_register(config, a, b, c);
        if (*eval) return cmd_evaluate(a, b, ef);
        if (*inv) return cmd_invert(config, a, b);
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericFailure &e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
