// pano360: command line front end for the panoramic diffusion toolkit.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pano360/checkpoint.hpp"
#include "pano360/edit_ops.hpp"
#include "pano360/eval_metrics.hpp"
#include "pano360/io.hpp"
#include "pano360/pano_data.hpp"
#include "pano360/sphere_geometry.hpp"
#include "pano360/train.hpp"

namespace fs = std::filesystem;
using namespace pano360;

namespace {

int worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    int n = hw ? static_cast<int>(hw) : 1;
    if (const char* env = std::getenv("PANO360_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + dir);
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("missing file: " + path);
}

MaskGrid mask_from_png(const std::string& path, int width, int height) {
    PixelGrid px = read_png(path);
    if (px.width != width || px.height != height)
        throw std::runtime_error("mask resolution mismatch: " + path);
    MaskGrid mask(width, height, 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) mask.at(y, x) = px.at(y, x, 0) >= 0.5 ? 1 : 0;
    return mask;
}

CubeFace lateral_face_from_name(const std::string& name) {
    for (CubeFace f : {CubeFace::Front, CubeFace::Right, CubeFace::Back, CubeFace::Left})
        if (name == cube_face_name(f)) return f;
    throw std::runtime_error("face must be front, right, back or left, got: " + name);
}

// Shared flag bundle; each subcommand registers the subset it uses.
struct CliOptions {
    std::string config_path;
    std::string checkpoint_path;
    std::string out_dir = ".";
    std::string input_path;
    std::string mask_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int steps = 0;  // 0 = use default (sample_steps from config, 28 otherwise)
    double guidance = -1.0;  // <0 = use default
    int count = 1;
    int class_id = 0;
    int face_size = 0;
    int yaw_pixels = 0;
    bool yaw_set = false;
    double degrees = 0.0;
    bool degrees_set = false;
    double replace_until = 0.4;
    std::string face_name = "front";
    bool emit_raw = false;
    bool emit_plot = false;
};

RunConfig load_config_or_default(const CliOptions& opt) {
    RunConfig cfg;
    if (!opt.config_path.empty()) {
        require_file(opt.config_path);
        cfg = read_run_config(opt.config_path);
    }
    if (opt.seed_set) cfg.seed = opt.seed;
    return cfg;
}

int cmd_train(const CliOptions& opt, int steps_override) {
    RunConfig cfg = load_config_or_default(opt);
    if (steps_override > 0) cfg.steps = steps_override;
    cfg.validate();
    ensure_out_dir(opt.out_dir);

    const std::string log_path = join_path(opt.out_dir, "train_log.txt");
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("cannot open log for writing: " + log_path);

    TrainStats stats;
    PanoModel model = run_train(cfg, log, &stats);

    const std::string ck_path = join_path(opt.out_dir, "checkpoint.bin");
    save_checkpoint(model, ck_path);
    {
        std::ofstream cfg_out(join_path(opt.out_dir, "run_config.ini"));
        write_run_config(cfg_out, cfg);
    }
    std::cout << "trained " << stats.optimizer_steps << " optimizer steps, loss "
              << stats.first_loss << " -> " << stats.last_loss << "\n";
    std::cout << "checkpoint: " << ck_path << "\n";
    return 0;
}

int cmd_generate(const CliOptions& opt) {
    require_file(opt.checkpoint_path);
    PanoModel model = load_checkpoint(opt.checkpoint_path);
    ensure_out_dir(opt.out_dir);

    const int steps = opt.steps > 0 ? opt.steps : 28;
    const double g = opt.guidance >= 0 ? opt.guidance : 3.0;
    const Condition c{opt.class_id, false};

    for (int i = 0; i < opt.count; ++i) {
        const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(i);
        ErpImage img = sample(model, c, steps, g, seed);
        char name[64];
        std::snprintf(name, sizeof(name), "sample_%03d.png", i);
        write_png(join_path(opt.out_dir, name), img);
        if (opt.emit_raw) {
            std::snprintf(name, sizeof(name), "sample_%03d.raw", i);
            write_raw_grid(join_path(opt.out_dir, name), img);
        }
    }
    std::cout << "wrote " << opt.count << " samples to " << opt.out_dir << "\n";
    return 0;
}

int cmd_project(const CliOptions& opt) {
    require_file(opt.input_path);
    ErpImage img = read_png_erp(opt.input_path);
    ensure_out_dir(opt.out_dir);

    const int fs = opt.face_size > 0 ? opt.face_size : img.width / 4;
    CubeFaceSet faces = erp_to_cubemap(img, fs);
    for (int i = 0; i < 6; ++i) {
        const CubeFace f = static_cast<CubeFace>(i);
        const std::string name = std::string("face_") + cube_face_name(f) + ".png";
        write_png(join_path(opt.out_dir, name), faces.face(f));
    }
    ErpImage back = cubemap_to_erp(faces, img.width, img.height);
    write_png(join_path(opt.out_dir, "roundtrip.png"), back);
    std::cout << "roundtrip_psnr=" << image_psnr(img, back, 2) << "\n";
    return 0;
}

int cmd_rotate(const CliOptions& opt) {
    require_file(opt.input_path);
    ErpImage img = read_png_erp(opt.input_path);
    ensure_out_dir(opt.out_dir);

    YawAngle a{};
    if (opt.yaw_set && opt.degrees_set)
        throw std::runtime_error("pass either --yaw (pixels) or --degrees, not both");
    if (opt.yaw_set) a = yaw_from_pixels(opt.yaw_pixels, img.width);
    else if (opt.degrees_set) a = yaw_continuous(opt.degrees * 3.14159265358979323846 / 180.0);
    else throw std::runtime_error("rotate needs --yaw or --degrees");

    write_png(join_path(opt.out_dir, "rotated.png"), yaw_rotate_erp(img, a));
    std::cout << "wrote rotated.png\n";
    return 0;
}

int cmd_refine(const CliOptions& opt) {
    require_file(opt.input_path);
    ErpImage img = read_png_erp(opt.input_path);
    ensure_out_dir(opt.out_dir);

    const int band = std::max(1, img.height / 8);
    const double before = pole_energy(img, band);
    ErpImage refined = refine_poles(img, opt.face_size);
    const double after = pole_energy(refined, band);
    write_png(join_path(opt.out_dir, "refined.png"), refined);
    std::cout << "pole_energy_before=" << before << "\n";
    std::cout << "pole_energy_after=" << after << "\n";
    return 0;
}

int cmd_inpaint(const CliOptions& opt) {
    require_file(opt.checkpoint_path);
    require_file(opt.input_path);
    require_file(opt.mask_path);
    PanoModel model = load_checkpoint(opt.checkpoint_path);
    ensure_out_dir(opt.out_dir);

    EditRequest req;
    req.source = read_png_erp(opt.input_path);
    if (req.source.width != model.config().width || req.source.height != model.config().height)
        throw std::runtime_error("input resolution does not match the checkpoint: " +
                                 opt.input_path);
    req.mask = mask_from_png(opt.mask_path, req.source.width, req.source.height);
    req.c = Condition{opt.class_id, false};
    req.replace_until = opt.replace_until;

    const int steps = opt.steps > 0 ? opt.steps : 28;
    const double g = opt.guidance >= 0 ? opt.guidance : 3.0;
    ErpImage out = inpaint(model, req, steps, g, opt.seed);
    write_png(join_path(opt.out_dir, "inpainted.png"), out);
    std::cout << "wrote inpainted.png\n";
    return 0;
}

int cmd_outpaint(const CliOptions& opt) {
    require_file(opt.checkpoint_path);
    require_file(opt.input_path);
    PanoModel model = load_checkpoint(opt.checkpoint_path);
    ensure_out_dir(opt.out_dir);

    const ModelConfig& mc = model.config();
    const CubeFace face = lateral_face_from_name(opt.face_name);
    PixelGrid photo = read_png(opt.input_path);
    PixelGrid ingested = ingest_perspective(photo, mc.width / 4);
    auto [partial, footprint] = perspective_to_erp(ingested, face, mc.width, mc.height);

    const int steps = opt.steps > 0 ? opt.steps : 28;
    const double g = opt.guidance >= 0 ? opt.guidance : 3.0;
    ErpImage out = outpaint(model, partial, footprint, Condition{opt.class_id, false}, steps, g,
                            opt.seed, opt.replace_until);
    write_png(join_path(opt.out_dir, "outpainted.png"), out);
    write_png(join_path(opt.out_dir, "outpaint_input.png"), partial);
    std::cout << "wrote outpainted.png\n";
    return 0;
}

int cmd_eval(const CliOptions& opt) {
    std::vector<std::string> inputs;
    if (fs::is_directory(opt.input_path)) {
        for (const auto& entry : fs::directory_iterator(opt.input_path))
            if (entry.path().extension() == ".png") inputs.push_back(entry.path().string());
        std::sort(inputs.begin(), inputs.end());
    } else {
        require_file(opt.input_path);
        inputs.push_back(opt.input_path);
    }
    if (inputs.empty()) throw std::runtime_error("no .png inputs under: " + opt.input_path);
    ensure_out_dir(opt.out_dir);

    // Per-image metrics are independent; workers chunk the list and write
    // into preallocated slots, so the reduction order is fixed.
    std::vector<MetricReport> reports(inputs.size());
    const int workers = std::min<int>(worker_count(), static_cast<int>(inputs.size()));
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;
    auto run = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= inputs.size() || failed.load()) break;
            try {
                ErpImage img = read_png_erp(inputs[i]);
                MetricReport rep;
                rep.seam_ratio = seam_discrepancy(img);
                rep.seam_samples = 1;
                rep.pole_energy = pano360::pole_energy(img, std::max(1, img.height / 8));
                rep.pole_samples = 1;
                rep.roundtrip_psnr = roundtrip_psnr(img);
                rep.roundtrip_samples = 1;
                reports[i] = rep;
            } catch (const std::exception& ex) {
                std::lock_guard<std::mutex> lock(error_mutex);
                error_message = ex.what();
                failed.store(true);
            }
        }
    };
    if (workers <= 1) {
        run();
    } else {
        for (int w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    if (failed.load()) throw std::runtime_error(error_message);

    MetricReport agg;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::string stem = fs::path(inputs[i]).stem().string();
        std::ofstream per(join_path(opt.out_dir, stem + "_metrics.txt"));
        write_metric_report(per, reports[i]);
        agg.seam_ratio += reports[i].seam_ratio;
        agg.pole_energy += reports[i].pole_energy;
        agg.roundtrip_psnr += reports[i].roundtrip_psnr;
    }
    const double n = static_cast<double>(inputs.size());
    agg.seam_ratio /= n;
    agg.pole_energy /= n;
    agg.roundtrip_psnr /= n;
    agg.seam_samples = agg.pole_samples = agg.roundtrip_samples = static_cast<int>(inputs.size());

    if (!opt.checkpoint_path.empty()) {
        require_file(opt.checkpoint_path);
        PanoModel model = load_checkpoint(opt.checkpoint_path);
        const int patch = model.config().patch;
        const int width = model.config().width;
        std::vector<YawAngle> angles = {yaw_from_pixels(patch, width),
                                        yaw_from_pixels(width / 4, width),
                                        yaw_from_pixels(width / 2, width)};
        const int steps = opt.steps > 0 ? opt.steps : 28;
        const double g = opt.guidance >= 0 ? opt.guidance : 1.0;
        agg.rotation_psnr = rotation_consistency(model, Condition{opt.class_id, false}, angles,
                                                 steps, g, opt.seed);
        agg.rotation_samples = static_cast<int>(angles.size());
    }

    const std::string agg_path = join_path(opt.out_dir, "metrics_aggregate.txt");
    {
        std::ofstream out(agg_path);
        write_metric_report(out, agg);
    }
    if (opt.emit_plot) write_png(join_path(opt.out_dir, "metrics.png"), metric_report_plot(agg));

    std::ifstream echo(agg_path);
    std::cout << echo.rdbuf();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"panoramic diffusion toolkit"};
    app.require_subcommand(1);

    CliOptions opt;
    int train_steps = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out-dir", opt.out_dir, "output directory");
        sub->add_option("--seed", opt.seed, "random seed")->each([&](const std::string&) {
            opt.seed_set = true;
        });
    };
    auto add_sampling = [&](CLI::App* sub) {
        sub->add_option("--steps", opt.steps, "denoising steps (default 28)");
        sub->add_option("--guidance", opt.guidance, "guidance scale (default 3.0)");
        sub->add_option("--class-id", opt.class_id, "scene class to condition on");
        sub->add_option("--checkpoint", opt.checkpoint_path, "model checkpoint")->required();
    };

    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", opt.config_path, "run configuration file");
    train->add_option("--steps", train_steps, "training items per epoch");
    add_common(train);

    CLI::App* generate = app.add_subcommand("generate", "sample panoramas from a checkpoint");
    generate->add_option("--count", opt.count, "number of samples");
    generate->add_flag("--raw", opt.emit_raw, "also dump float32 grids");
    add_sampling(generate);
    add_common(generate);

    CLI::App* project = app.add_subcommand("project", "convert a panorama to cube faces and back");
    project->add_option("--input", opt.input_path, "equirectangular PNG")->required();
    project->add_option("--face-size", opt.face_size, "cube face size (default width/4)");
    add_common(project);

    CLI::App* rotate = app.add_subcommand("rotate", "yaw-rotate a panorama");
    rotate->add_option("--input", opt.input_path, "equirectangular PNG")->required();
    rotate->add_option("--yaw", opt.yaw_pixels, "quantized shift in pixels")
        ->each([&](const std::string&) { opt.yaw_set = true; });
    rotate->add_option("--degrees", opt.degrees, "continuous yaw in degrees")
        ->each([&](const std::string&) { opt.degrees_set = true; });
    add_common(rotate);

    CLI::App* refine = app.add_subcommand("refine", "regenerate the polar caps of a panorama");
    refine->add_option("--input", opt.input_path, "equirectangular PNG")->required();
    refine->add_option("--face-size", opt.face_size, "cube face size (default width/4)");
    add_common(refine);

    CLI::App* inpaint = app.add_subcommand("inpaint", "regenerate masked regions of a panorama");
    inpaint->add_option("--input", opt.input_path, "source panorama PNG")->required();
    inpaint->add_option("--mask", opt.mask_path, "keep mask PNG (white = keep)")->required();
    inpaint->add_option("--replace-until", opt.replace_until,
                        "fraction of steps using token replacement");
    add_sampling(inpaint);
    add_common(inpaint);

    CLI::App* outpaint =
        app.add_subcommand("outpaint", "extend a perspective photo to a panorama");
    outpaint->add_option("--input", opt.input_path, "perspective photo PNG")->required();
    outpaint->add_option("--face", opt.face_name, "lateral face the photo looks through");
    outpaint->add_option("--replace-until", opt.replace_until,
                         "fraction of steps using token replacement");
    add_sampling(outpaint);
    add_common(outpaint);

    CLI::App* eval = app.add_subcommand("eval", "compute panorama quality metrics");
    eval->add_option("--input", opt.input_path, "PNG file or directory of PNGs")->required();
    eval->add_option("--checkpoint", opt.checkpoint_path,
                     "optional checkpoint for rotation consistency");
    eval->add_option("--steps", opt.steps, "denoising steps for rotation consistency");
    eval->add_option("--guidance", opt.guidance, "guidance for rotation consistency");
    eval->add_option("--class-id", opt.class_id, "scene class to condition on");
    eval->add_flag("--plot", opt.emit_plot, "emit a PNG bar plot of the aggregate");
    add_common(eval);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(opt, train_steps);
        if (generate->parsed()) return cmd_generate(opt);
        if (project->parsed()) return cmd_project(opt);
        if (rotate->parsed()) return cmd_rotate(opt);
        if (refine->parsed()) return cmd_refine(opt);
        if (inpaint->parsed()) return cmd_inpaint(opt);
        if (outpaint->parsed()) return cmd_outpaint(opt);
        if (eval->parsed()) return cmd_eval(opt);
    } catch (const std::exception& ex) {
        std::cerr << "pano360: " << ex.what() << "\n";
        return 1;
    }
    std::cerr << "pano360: no subcommand\n";
    return 2;
}
