// flameguide command-line tool: synthetic assets, alignment, guidance
// rendering, guidance encoding, window stitching and a toy sampler.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli_support.hpp"
#include "flameguide/alignment.hpp"
#include "flameguide/assets.hpp"
#include "flameguide/diffusion.hpp"
#include "flameguide/encoder.hpp"
#include "flameguide/image_io.hpp"
#include "flameguide/raster.hpp"
#include "flameguide/stitcher.hpp"
#include "flameguide/tensor.hpp"

#ifndef FLAMEGUIDE_VERSION
#define FLAMEGUIDE_VERSION "dev"
#endif

namespace fg = flameguide;
namespace fs = std::filesystem;
using fg::cli::format_double;
using fg::cli::RunManifest;
using fg::cli::StagedOutput;

namespace {

RunManifest new_manifest(const std::string& command) {
    RunManifest m;
    m.version = FLAMEGUIDE_VERSION;
    m.command = command;
    return m;
}

std::vector<double> parse_reals(const std::string& text, std::size_t expected, const char* flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw fg::UsageError(std::string(flag) + ": not a number: '" + item + "'");
        out.push_back(v);
    }
    if (out.size() != expected)
        throw fg::UsageError(std::string(flag) + ": expected " + std::to_string(expected) + " comma-separated values");
    return out;
}

/// "512" or "640x480" -> (width, height).
std::pair<std::size_t, std::size_t> parse_resolution(const std::string& text) {
    static const std::regex square(R"(^(\d+)$)"), rect(R"(^(\d+)x(\d+)$)");
    std::smatch m;
    if (std::regex_match(text, m, square)) return {std::stoul(m[1]), std::stoul(m[1])};
    if (std::regex_match(text, m, rect)) return {std::stoul(m[1]), std::stoul(m[2])};
    throw fg::UsageError("--resolution: expected N or WxH, got '" + text + "'");
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

void write_manifest_beside(const StagedOutput& out, const RunManifest& m) {
    if (fs::is_directory(out.path())) m.save(out.path() / "manifest.json");
}

// ---------------------------------------------------------------------------
// gen-test-assets

struct GenAssets {
    std::uint64_t seed = 7;
    std::size_t vertices = 100, joints = 4, shape_width = 10, expression_width = 10, frames = 3;
    double fps = 25.0;
    std::string out;
    bool force = false;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("gen-test-assets", "Write a synthetic model, parameter files and encoder weights");
        c->add_option("--seed", seed, "Generator seed")->capture_default_str();
        c->add_option("--vertices,-n", vertices, "Vertex count (>= 4)")->capture_default_str();
        c->add_option("--joints,-k", joints, "Articulated joint count (>= 1)")->capture_default_str();
        c->add_option("--shape-width", shape_width, "Shape basis width")->capture_default_str();
        c->add_option("--expression-width", expression_width, "Expression basis width")->capture_default_str();
        c->add_option("--frames", frames, "Frames in the driving sequence")->capture_default_str();
        c->add_option("--fps", fps, "Driving sequence frame rate")->capture_default_str();
        c->add_option("--out", out, "Output directory");
        c->add_flag("--force", force, "Replace a non-empty output directory");
        c->callback([this] { run(); });
    }

    void run() {
        const auto model = fg::generate_test_model(seed, vertices, joints, {shape_width, expression_width});
        StagedOutput dir(out.empty() ? fg::cli::default_output("gen-test-assets") : fs::path(out),
                         StagedOutput::Kind::directory, force);
        fg::save_model(dir.path() / "model.flmf", model);
        fg::save_params(dir.path() / "identity.jsonl", fg::ParamSequence{{fg::generate_identity(model, seed + 1)}, fps});
        fg::save_params(dir.path() / "driving.jsonl", fg::generate_driving_sequence(model, seed + 2, frames, fps));
        const fg::GGEConfig config;
        fg::save_encoder_weights(dir.path() / "encoder_init.ggew", fg::init_encoder_weights<double>(config, seed));
        fg::save_encoder_weights(dir.path() / "encoder_trained.ggew",
                                 fg::init_encoder_weights<double>(config, seed, fg::OutputInit::random));

        auto m = new_manifest("gen-test-assets");
        m.config = {{"seed", std::to_string(seed)},
                    {"vertices", std::to_string(vertices)},
                    {"joints", std::to_string(joints)},
                    {"shape-width", std::to_string(shape_width)},
                    {"expression-width", std::to_string(expression_width)},
                    {"frames", std::to_string(frames)},
                    {"fps", format_double(fps)}};
        write_manifest_beside(dir, m);
        dir.commit();
        std::cout << "wrote test assets to " << dir.final_path().string() << "\n";
    }
};

// ---------------------------------------------------------------------------
// align

struct Align {
    std::string identity, driving, out;
    bool force = false;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("align", "Transfer identity shape onto a driving sequence");
        c->add_option("--identity", identity, "Identity parameter file (first frame is used)")->required();
        c->add_option("--driving", driving, "Driving parameter sequence")->required();
        c->add_option("--out", out, "Output directory");
        c->add_flag("--force", force, "Replace an existing output");
        c->callback([this] { run(); });
    }

    void run() {
        const auto id_seq = fg::load_params(identity);
        if (id_seq.frames.empty()) throw fg::ValidationError(identity + ": identity file holds no frames");
        const auto drv = fg::load_params(driving);
        const auto aligned = fg::align(id_seq.frames.front(), drv);

        StagedOutput dir(out.empty() ? fg::cli::default_output("align") : fs::path(out), StagedOutput::Kind::directory,
                         force);
        fg::save_params(dir.path() / "aligned.jsonl", aligned.frames);
        auto m = new_manifest("align");
        m.add_input("identity", identity);
        m.add_input("driving", driving);
        write_manifest_beside(dir, m);
        dir.commit();
        std::cout << "aligned " << aligned.frames.frames.size() << " frames -> "
                  << (dir.final_path() / "aligned.jsonl").string() << "\n";
    }
};

// ---------------------------------------------------------------------------
// render

struct Render {
    std::string model, params, camera = "1,0,0", resolution = "512", out;
    double near = -1.5, far = 1.5;
    std::size_t jobs = 1;
    bool force = false;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("render", "Rasterize depth, normal and shaded guidance PNGs per frame");
        c->add_option("--model", model, "Model container (.flmf)")->required();
        c->add_option("--params", params, "Aligned parameter sequence")->required();
        c->add_option("--camera", camera, "Weak-perspective camera scale,tx,ty")->capture_default_str();
        c->add_option("--resolution", resolution, "Image size N or WxH")->capture_default_str();
        c->add_option("--near", near, "Depth range near view distance")->capture_default_str();
        c->add_option("--far", far, "Depth range far view distance")->capture_default_str();
        c->add_option("--jobs,-j", jobs, "Frames rendered in parallel")->capture_default_str();
        c->add_option("--out", out, "Output directory");
        c->add_flag("--force", force, "Replace a non-empty output directory");
        c->callback([this] { run(); });
    }

    void run() {
        const auto cam = parse_reals(camera, 3, "--camera");
        const auto [w, h] = parse_resolution(resolution);
        fg::RenderSettings settings;
        settings.camera = {cam[0], cam[1], cam[2], w, h};
        try {
            settings.camera.validate();
        } catch (const fg::ValidationError& e) {
            throw fg::UsageError(e.what());
        }
        settings.near = near;
        settings.far = far;
        if (!(near < far)) throw fg::UsageError("--near must be less than --far");

        const auto flame = fg::load_model(model);
        const auto seq = fg::load_params(params);
        for (const auto& f : seq.frames) fg::validate_params(flame, f);

        StagedOutput dir(out.empty() ? fg::cli::default_output("render") : fs::path(out), StagedOutput::Kind::directory,
                         force);
        fg::parallel_for(seq.frames.size(), jobs, [&](std::size_t i) {
            fg::write_guidance_pngs(dir.path(), i, fg::render_frame(flame, seq.frames[i], settings));
        });
        auto m = new_manifest("render");
        m.add_input("model", model);
        m.add_input("params", params);
        m.config = {{"camera", format_double(cam[0]) + "," + format_double(cam[1]) + "," + format_double(cam[2])},
                    {"resolution", std::to_string(w) + "x" + std::to_string(h)},
                    {"near", format_double(near)},
                    {"far", format_double(far)}};
        write_manifest_beside(dir, m);
        dir.commit();
        std::cout << "rendered " << seq.frames.size() << " frames (" << 3 * seq.frames.size() << " PNGs) to "
                  << dir.final_path().string() << "\n";
    }
};

// ---------------------------------------------------------------------------
// encode

/// Frame indices per guidance kind found in a render directory.
std::map<std::string, std::set<std::size_t>> scan_guidance(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw fg::IoError("guidance directory not found: " + dir.string());
    static const std::regex pattern(R"(^(\d{6})_(depth|normal|render)\.png$)");
    std::map<std::string, std::set<std::size_t>> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern)) found[m[2]].insert(std::stoul(m[1]));
    }
    return found;
}

fg::FeatureMap<double> image_to_map(const fg::Image& img, fg::FeatureTag tag) {
    fg::FeatureMap<double> out(fg::MapShape{img.channels, img.height, img.width}, tag);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(x, y, c);
    return out;
}

struct Encode {
    std::string guidance, weights, out;
    std::size_t jobs = 1, window = 0, overlap = 0;
    bool force = false;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("encode", "Encode guidance PNGs into fused guidance tensors");
        c->add_option("--guidance", guidance, "Directory written by `render`")->required();
        c->add_option("--weights", weights, "Encoder weights (.ggew)")->required();
        c->add_option("--window", window, "Also split the result into windows of this many frames (0 = off)")
            ->capture_default_str();
        c->add_option("--overlap", overlap, "Frames shared by consecutive windows")->capture_default_str();
        c->add_option("--jobs,-j", jobs, "Frames encoded in parallel")->capture_default_str();
        c->add_option("--out", out, "Output directory");
        c->add_flag("--force", force, "Replace a non-empty output directory");
        c->callback([this] { run(); });
    }

    void run() {
        const auto enc = fg::load_encoder_weights<double>(weights);
        static const std::vector<std::pair<fg::FeatureTag, std::string>> kinds{
            {fg::FeatureTag::depth, "depth"}, {fg::FeatureTag::normal, "normal"}, {fg::FeatureTag::render, "render"}};
        if (enc.branches.size() != kinds.size())
            throw fg::ValidationError("encoder has " + std::to_string(enc.branches.size()) +
                                      " branches; guidance needs exactly 3 (depth, normal, render)");
        for (std::size_t m = 0; m < kinds.size(); ++m)
            if (enc.branches[m].spec.tag != kinds[m].first)
                throw fg::ValidationError("encoder branch " + std::to_string(m) + " is not '" + kinds[m].second + "'");

        const auto found = scan_guidance(guidance);
        std::size_t present = 0;
        for (const auto& [tag, name] : kinds) present += found.count(name);
        if (present != kinds.size())
            throw fg::ValidationError("found " + std::to_string(present) +
                                      " of 3 guidance map sets (depth, normal, render) in " + guidance);
        const auto& frames = found.at("depth");
        for (const auto& [tag, name] : kinds)
            if (found.at(name) != frames)
                throw fg::ValidationError("guidance map sets cover different frames in " + guidance);
        const std::size_t n = frames.size();
        if (n == 0 || *frames.rbegin() != n - 1)
            throw fg::ValidationError("guidance frames must be numbered 0..N-1 without gaps");

        std::vector<fg::FeatureMap<double>> fused(n);
        fg::parallel_for(n, jobs, [&](std::size_t i) {
            std::vector<fg::FeatureMap<double>> maps;
            for (const auto& [tag, name] : kinds) {
                const auto png = fg::read_png(fs::path(guidance) / fg::guidance_filename(i, name.c_str()));
                maps.push_back(image_to_map(png.image, tag));
            }
            if (maps[0].shape.height != maps[1].shape.height || maps[0].shape.width != maps[1].shape.width ||
                maps[0].shape.height != maps[2].shape.height || maps[0].shape.width != maps[2].shape.width)
                throw fg::ValidationError("guidance maps of frame " + std::to_string(i) + " differ in size");
            fused[i] = fg::encode_guidance(std::span<const fg::FeatureMap<double>>(maps), enc);
        });
        const auto shape = fused.front().shape;
        for (const auto& f : fused)
            if (f.shape != shape) throw fg::ValidationError("guidance frames differ in resolution");

        StagedOutput dir(out.empty() ? fg::cli::default_output("encode") : fs::path(out), StagedOutput::Kind::directory,
                         force);
        auto frames_tensor = [&](std::size_t first, std::size_t count) {
            fg::Tensor t;
            t.shape = {count, shape.channels, shape.height, shape.width};
            t.data.reserve(count * shape.size());
            for (std::size_t f = first; f < first + count; ++f)
                for (double v : fused[f].data) t.data.push_back(static_cast<float>(v));
            return t;
        };
        fg::save_tensor(dir.path() / "guidance.tensor", frames_tensor(0, n));
        auto m = new_manifest("encode");
        m.add_input("weights", weights);
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& [tag, name] : kinds)
                m.add_input("guidance", fs::path(guidance) / fg::guidance_filename(i, name.c_str()));
        if (window > 0) {
            const auto plan = fg::plan_windows(n, window, overlap);
            fs::create_directories(dir.path() / "windows");
            for (std::size_t w = 0; w < plan.starts.size(); ++w) {
                char name[32];
                std::snprintf(name, sizeof name, "window_%04zu.tensor", w);
                fg::save_tensor(dir.path() / "windows" / name, frames_tensor(plan.starts[w], plan.window_length));
            }
            m.config["window"] = std::to_string(window);
            m.config["overlap"] = std::to_string(overlap);
        }
        write_manifest_beside(dir, m);
        dir.commit();
        std::cout << "encoded " << n << " frames to tensor " << n << "x" << shape.str() << " in "
                  << dir.final_path().string() << "\n";
    }
};

// ---------------------------------------------------------------------------
// stitch

struct Stitch {
    std::string windows, out;
    std::size_t frames = 0, window = 12, overlap = 4;
    bool force = false;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("stitch", "Crossfade overlapping window tensors into one sequence");
        c->add_option("--windows", windows, "Directory of window_*.tensor files, frame axis first")->required();
        c->add_option("--frames", frames, "Total frame count N")->required();
        c->add_option("--window", window, "Window length")->capture_default_str();
        c->add_option("--overlap", overlap, "Overlap between consecutive windows")->capture_default_str();
        c->add_option("--out", out, "Output directory");
        c->add_flag("--force", force, "Replace a non-empty output directory");
        c->callback([this] { run(); });
    }

    void run() {
        const auto plan = fg::plan_windows(frames, window, overlap);
        if (!fs::is_directory(windows)) throw fg::IoError("window directory not found: " + windows);
        std::vector<fs::path> files;
        static const std::regex pattern(R"(^window_\d+\.tensor$)");
        for (const auto& e : fs::directory_iterator(windows))
            if (std::regex_match(e.path().filename().string(), pattern)) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.size() != plan.starts.size())
            throw fg::ValidationError("found " + std::to_string(files.size()) + " window tensors, plan needs " +
                                      std::to_string(plan.starts.size()));

        std::vector<fg::FrameBlock<float>> blocks;
        std::vector<std::size_t> payload_shape;
        auto m = new_manifest("stitch");
        for (const auto& f : files) {
            auto t = fg::load_tensor(f);
            if (t.shape.empty()) throw fg::ValidationError(f.string() + ": tensor has no frame axis");
            std::vector<std::size_t> rest(t.shape.begin() + 1, t.shape.end());
            if (blocks.empty()) payload_shape = rest;
            if (rest != payload_shape) throw fg::ValidationError(f.string() + ": payload shape differs from first window");
            if (t.shape[0] != plan.window_length)
                throw fg::ValidationError(f.string() + ": holds " + std::to_string(t.shape[0]) + " frames, window is " +
                                          std::to_string(plan.window_length));
            blocks.push_back({fg::Tensor::count(rest), std::move(t.data)});
            m.add_input("windows", f);
        }
        const auto blended = fg::blend(blocks, plan);

        StagedOutput dir(out.empty() ? fg::cli::default_output("stitch") : fs::path(out), StagedOutput::Kind::directory,
                         force);
        fg::Tensor result;
        result.shape = {frames};
        result.shape.insert(result.shape.end(), payload_shape.begin(), payload_shape.end());
        result.data = blended.frames.data;
        fg::save_tensor(dir.path() / "stitched.tensor", result);

        nlohmann::ordered_json weights = nlohmann::ordered_json::array();
        for (const auto& contribs : blended.contributions) {
            nlohmann::ordered_json row = nlohmann::ordered_json::array();
            for (const auto& c : contribs) row.push_back({{"window", c.window}, {"weight", c.weight}});
            weights.push_back(row);
        }
        std::ofstream(dir.path() / "blend_weights.json") << weights.dump() << '\n';

        m.config = {{"frames", std::to_string(frames)},
                    {"window", std::to_string(window)},
                    {"overlap", std::to_string(overlap)}};
        write_manifest_beside(dir, m);
        dir.commit();
        std::cout << "stitched " << plan.starts.size() << " windows (starts " << join_sizes(plan.starts) << ") into "
                  << frames << " frames\n";
    }
};

// ---------------------------------------------------------------------------
// demo-diffuse

struct DemoDiffuse {
    std::uint64_t seed = 0;
    std::size_t steps = 50;
    double beta_start = 1e-4, beta_end = 0.02;
    std::string latent = "4,8,8", mode = "zero", out;
    bool no_noise = false, force = false;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("demo-diffuse", "Run the toy sampler and write a per-step trace");
        c->add_option("--seed", seed, "Random seed")->capture_default_str();
        c->add_option("--steps,-T", steps, "Diffusion steps")->capture_default_str();
        c->add_option("--beta-start", beta_start, "First beta of the linear schedule")->capture_default_str();
        c->add_option("--beta-end", beta_end, "Last beta of the linear schedule")->capture_default_str();
        c->add_option("--latent", latent, "Latent shape c,h,w")->capture_default_str();
        c->add_option("--mode", mode, "zero: zero denoiser from z_T ~ N(0, I); teacher: recover a planted z_0")
            ->check(CLI::IsMember({"zero", "teacher"}))
            ->capture_default_str();
        c->add_flag("--no-noise", no_noise, "Disable noise injection between steps (always off in teacher mode)");
        c->add_option("--out", out, "Output directory");
        c->add_flag("--force", force, "Replace a non-empty output directory");
        c->callback([this] { run(); });
    }

    void run() {
        const auto dims = parse_reals(latent, 3, "--latent");
        for (double d : dims)
            if (!(d >= 1.0) || d != std::floor(d)) throw fg::UsageError("--latent: dimensions must be positive integers");
        const fg::MapShape shape{static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                                 static_cast<std::size_t>(dims[2])};
        const auto sched = fg::make_linear_schedule(steps, beta_start, beta_end);

        std::mt19937_64 rng(seed);
        const fg::FeatureMap<double> zero(shape, fg::FeatureTag::guidance, 0.0);
        fg::LatentState start;
        std::optional<fg::FeatureMap<double>> planted;
        fg::Denoiser denoiser = fg::zero_denoiser();
        fg::SampleOptions opts;
        opts.add_noise = !no_noise;
        if (mode == "teacher") {
            planted = fg::standard_normal(shape, rng);
            const auto eps = fg::standard_normal(shape, rng);
            start = fg::q_sample(*planted, steps, eps, sched);
            denoiser = fg::teacher_forced_denoiser(*planted, sched);
            opts.add_noise = false;
        } else {
            start = {fg::standard_normal(shape, rng), steps};
        }

        StagedOutput dir(out.empty() ? fg::cli::default_output("demo-diffuse") : fs::path(out),
                         StagedOutput::Kind::directory, force);
        std::ofstream trace(dir.path() / "trace.jsonl", std::ios::binary);
        auto record = [&](const fg::LatentState& s) {
            double sum = 0, sq = 0, lo = s.z.data[0], hi = s.z.data[0];
            for (double v : s.z.data) {
                sum += v;
                sq += v * v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            const double n = static_cast<double>(s.z.data.size());
            nlohmann::ordered_json j{{"t", s.t}, {"mean", sum / n}, {"std", std::sqrt(std::max(0.0, sq / n - (sum / n) * (sum / n)))},
                                     {"min", lo}, {"max", hi}};
            if (planted) {
                double err = 0;
                for (std::size_t i = 0; i < s.z.data.size(); ++i) err = std::max(err, std::abs(s.z.data[i] - planted->data[i]));
                j["max_abs_error_vs_z0"] = err;
            }
            trace << j.dump() << '\n';
        };
        record(start);
        opts.on_step = record;
        const auto result = fg::sample_loop(start, denoiser, zero, zero, sched, seed + 1, opts);
        trace.close();
        if (!trace) throw fg::IoError("failed writing trace");

        auto to_tensor = [](const fg::FeatureMap<double>& f) {
            fg::Tensor t;
            t.shape = {f.shape.channels, f.shape.height, f.shape.width};
            for (double v : f.data) t.data.push_back(static_cast<float>(v));
            return t;
        };
        fg::save_tensor(dir.path() / "z_T.tensor", to_tensor(start.z));
        fg::save_tensor(dir.path() / "z_0.tensor", to_tensor(result.z));
        if (planted) fg::save_tensor(dir.path() / "planted_z0.tensor", to_tensor(*planted));

        auto m = new_manifest("demo-diffuse");
        m.config = {{"seed", std::to_string(seed)},
                    {"steps", std::to_string(steps)},
                    {"beta-start", format_double(beta_start)},
                    {"beta-end", format_double(beta_end)},
                    {"latent", std::to_string(shape.channels) + "," + std::to_string(shape.height) + "," +
                                   std::to_string(shape.width)},
                    {"mode", mode}};
        if (no_noise) m.config["no-noise"] = "true";
        write_manifest_beside(dir, m);
        dir.commit();
        if (planted) {
            double err = 0;
            for (std::size_t i = 0; i < result.z.data.size(); ++i)
                err = std::max(err, std::abs(result.z.data[i] - planted->data[i]));
            std::cout << "teacher-forced recovery max |z_0 - planted| = " << err << "\n";
        }
        std::cout << "wrote " << steps << "-step trace to " << dir.final_path().string() << "\n";
    }
};

int run_cli(const std::vector<std::string>& args);

// ---------------------------------------------------------------------------
// rerun

struct Rerun {
    std::string manifest, out;
    bool force = false;
    int status = fg::cli::kOk;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("rerun", "Repeat a command from its manifest.json");
        c->add_option("--manifest", manifest, "manifest.json written by a previous run")->required();
        c->add_option("--out", out, "Output location for the repeated run")->required();
        c->add_flag("--force", force, "Replace an existing output");
        c->callback([this] { run(); });
    }

    void run() {
        const auto m = RunManifest::load(manifest);
        if (m.tool != "flameguide") throw fg::ValidationError(manifest + ": not a flameguide manifest");
        std::vector<std::string> args{m.command};
        std::set<std::string> seen_roles;
        for (const auto& in : m.inputs) {
            if (fg::cli::sha256_file(in.path) != in.sha256)
                throw fg::ValidationError("input changed since the manifest was written: " + in.path);
            if (in.role == "guidance" || in.role == "windows") {
                // Directory inputs are recorded per file; pass the directory once.
                if (seen_roles.insert(in.role).second) {
                    args.push_back("--" + in.role);
                    args.push_back(fs::path(in.path).parent_path().generic_string());
                }
                continue;
            }
            args.push_back("--" + in.role);
            args.push_back(in.path);
        }
        for (const auto& [k, v] : m.config) {
            if (v == "true") {
                args.push_back("--" + k);
                continue;
            }
            args.push_back("--" + k);
            args.push_back(v);
        }
        args.push_back("--out");
        args.push_back(out);
        if (force) args.push_back("--force");
        status = run_cli(args);
        if (status != fg::cli::kOk) throw fg::Error("repeated command exited with status " + std::to_string(status));
    }
};

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"flameguide: head-model motion guidance toolkit", "flameguide"};
    app.require_subcommand(1);
    app.set_version_flag("--version", FLAMEGUIDE_VERSION);
    GenAssets gen;
    Align align;
    Render render;
    Encode encode;
    Stitch stitch;
    DemoDiffuse demo;
    Rerun rerun;
    gen.add(app);
    align.add(app);
    render.add(app);
    encode.add(app);
    stitch.add(app);
    demo.add(app);
    rerun.add(app);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? fg::cli::kOk : fg::cli::kUsage;
    } catch (const fg::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return fg::cli::kUsage;
    } catch (const fg::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return fg::cli::kValidation;
    } catch (const fg::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return fg::cli::kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return fg::cli::kIo;
    } catch (const fg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return fg::cli::kValidation;
    }
    return fg::cli::kOk;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args);
}
