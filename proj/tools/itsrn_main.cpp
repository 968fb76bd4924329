// itsrn: continuous screen-content super-resolution toolkit.
//
// Subcommands: sr, train, eval, ablate, gradcheck, spectrum, synth.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "itsrn/checkpoint.hpp"
#include "itsrn/data.hpp"
#include "itsrn/eval.hpp"
#include "itsrn/gradcheck_cases.hpp"
#include "itsrn/model.hpp"
#include "itsrn/threading.hpp"
#include "itsrn/train.hpp"

namespace fs = std::filesystem;

namespace {

struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

void require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path))
        throw usage_error(std::string(what) + " not found: " + path);
}

void require_dir(const std::string& path, const char* what) {
    if (!fs::is_directory(path))
        throw usage_error(std::string(what) + " not found: " + path);
}

std::string checkpoint_dtype(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw usage_error("checkpoint not found: " + path);
    char magic[4];
    in.read(magic, 4);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    std::string text(mlen, '\0');
    in.read(text.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw itsrn::format_error("checkpoint: truncated manifest in " + path);
    return nlohmann::json::parse(text).at("dtype").get<std::string>();
}

// Line/column from a byte offset, for config parse diagnostics.
std::pair<int, int> line_of_offset(const std::string& text, std::size_t offset) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

struct CliTrainSettings {
    itsrn::train::TrainConfig train;
    itsrn::ModelConfig model = itsrn::ModelConfig::desk();
};

CliTrainSettings parse_config_file(const std::string& path) {
    require_file(path, "config file");
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto [line, col] = line_of_offset(text, e.byte);
        throw usage_error("config parse error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }
    CliTrainSettings out;
    try {
        itsrn::detail::reject_unknown_keys(j, {"model", "train"}, "config file");
        if (j.contains("model")) out.model = itsrn::model_config_from_json(j.at("model"));
        if (j.contains("train")) {
            const auto& t = j.at("train");
            itsrn::detail::reject_unknown_keys(
                t,
                {"steps", "batch", "patch", "scale_min", "scale_max", "base_lr", "decay_fractions",
                 "decay_factor", "augment_prob", "checkpoint_every"},
                "train config");
            auto& c = out.train;
            if (t.contains("steps")) c.steps = t.at("steps").get<std::int64_t>();
            if (t.contains("batch")) c.batch = t.at("batch").get<std::int64_t>();
            if (t.contains("patch")) c.patch = t.at("patch").get<std::int64_t>();
            if (t.contains("scale_min")) c.scale_min = t.at("scale_min").get<double>();
            if (t.contains("scale_max")) c.scale_max = t.at("scale_max").get<double>();
            if (t.contains("base_lr")) c.base_lr = t.at("base_lr").get<double>();
            if (t.contains("decay_fractions"))
                c.decay_fractions = t.at("decay_fractions").get<std::vector<double>>();
            if (t.contains("decay_factor")) c.decay_factor = t.at("decay_factor").get<double>();
            if (t.contains("augment_prob")) c.augment_prob = t.at("augment_prob").get<double>();
            if (t.contains("checkpoint_every"))
                c.checkpoint_every = t.at("checkpoint_every").get<std::int64_t>();
        }
    } catch (const itsrn::format_error& e) {
        throw usage_error(std::string("config error: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw usage_error(std::string("config error: ") + e.what());
    }
    return out;
}

std::vector<double> parse_scales(const std::string& csv) {
    std::vector<double> scales;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) scales.push_back(std::stod(tok));
    if (scales.empty()) throw usage_error("no scales given");
    return scales;
}

template <typename T>
void write_spectrum_ppm(const itsrn::Tensor<T>& mag, const std::string& path) {
    const std::int64_t h = mag.dim(0), w = mag.dim(1);
    // log(1+|F|), normalized to [0,1] for display.
    itsrn::Tensor<T> img({3, h, w});
    double mx = 0.0;
    for (std::int64_t i = 0; i < h * w; ++i)
        mx = std::max(mx, std::log1p(static_cast<double>(mag[i])));
    for (std::int64_t i = 0; i < h * w; ++i) {
        const double v = mx > 0 ? std::log1p(static_cast<double>(mag[i])) / mx : 0.0;
        for (int c = 0; c < 3; ++c) img[c * h * w + i] = static_cast<T>(v);
    }
    itsrn::data::save_ppm(img, path);
}

// --- subcommand bodies ---

int cmd_sr(const std::string& model_path, const std::string& in_path, double scale,
           const std::string& out_path) {
    if (!(scale >= itsrn::kMinScale && scale <= itsrn::kMaxScale))
        throw usage_error("--scale must lie in [1, 64]");
    require_file(model_path, "model checkpoint");
    require_file(in_path, "input image");
    auto model = itsrn::load_model<float>(model_path);
    auto lr = itsrn::data::load_ppm<float>(in_path);
    const auto t0 = std::chrono::steady_clock::now();
    auto sr = itsrn::forward(model, lr, scale);
    const auto t1 = std::chrono::steady_clock::now();
    itsrn::data::save_ppm(sr, out_path);
    std::printf("%lldx%lld -> %lldx%lld (x%g) in %lld ms\n", static_cast<long long>(lr.dim(1)),
                static_cast<long long>(lr.dim(2)), static_cast<long long>(sr.dim(1)),
                static_cast<long long>(sr.dim(2)), scale,
                static_cast<long long>(
                    std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count()));
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::uint64_t seed, const std::string& resume,
              const std::string& manifest) {
    auto settings = parse_config_file(config_path);
    require_dir(data_dir, "data directory");
    if (!resume.empty()) require_file(resume, "resume checkpoint");
    auto pool = itsrn::data::load_pool<float>(data_dir, manifest);
    auto model = itsrn::Model<float>::init(settings.model, seed);
    settings.train.seed = seed;
    settings.train.out_dir = out_dir;
    settings.train.resume_from = resume;
    auto result = itsrn::train::train_loop(model, pool, settings.train);
    std::printf("trained %lld steps; final checkpoint: %s\n",
                static_cast<long long>(settings.train.steps), result.final_checkpoint.c_str());
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir,
             const std::string& scales_csv, const std::string& csv_out,
             const std::string& manifest) {
    require_file(model_path, "model checkpoint");
    require_dir(data_dir, "data directory");
    const auto scales = parse_scales(scales_csv);
    auto ck = itsrn::read_checkpoint<float>(model_path);
    auto model = itsrn::model_from_checkpoint(ck);
    double train_scale_max = 4.0;
    if (auto it = ck.extras.find("train_scale_max"); it != ck.extras.end())
        train_scale_max = std::stod(it->second);
    auto pool = itsrn::data::load_pool<float>(data_dir, manifest);

    std::ofstream csv;
    if (!csv_out.empty()) {
        csv.open(csv_out, std::ios::trunc);
        csv << "scale,set,psnr,ssim\n";
    }
    std::printf("%-8s %-22s %10s %10s\n", "scale", "set", "PSNR", "SSIM");
    for (double r : scales) {
        auto rep = itsrn::evalm::evaluate(model, pool, r);
        const char* split = r <= train_scale_max ? "in-training-scale" : "out-of-training-scale";
        std::printf("x%-7g %-22s %10.4f %10.4f\n", r, split, rep.mean_psnr(), rep.mean_ssim());
        if (csv) csv << r << "," << split << "," << rep.mean_psnr() << "," << rep.mean_ssim() << "\n";
    }
    return 0;
}

int cmd_ablate(const std::string& data_dir, const std::string& csv_out, std::uint64_t seed,
               std::int64_t steps, std::int64_t patch, std::int64_t batch, double eval_scale,
               const std::string& manifest) {
    require_dir(data_dir, "data directory");
    auto pool = itsrn::data::load_pool<float>(data_dir, manifest);
    itsrn::evalm::AblationOptions opt;
    opt.steps = steps;
    opt.batch = batch;
    opt.patch = patch;
    opt.eval_scale = eval_scale;
    opt.seed = seed;
    auto rows = itsrn::evalm::run_ablation(itsrn::ModelConfig::desk(), pool, opt);

    std::ofstream csv;
    if (!csv_out.empty()) {
        csv.open(csv_out, std::ios::trunc);
        csv << "axis,id,psnr,ssim\n";
    }
    const char* tables[3] = {"variant", "reweight", "branch_mode"};
    const char* titles[3] = {"Upsampler variant", "Reweight function", "Branch mode"};
    for (int t = 0; t < 3; ++t) {
        std::printf("\n%s (x%g, %lld steps, seed %llu)\n", titles[t], eval_scale,
                    static_cast<long long>(steps), static_cast<unsigned long long>(seed));
        std::printf("%-16s %10s %10s\n", "id", "PSNR", "SSIM");
        for (const auto& row : rows) {
            if (row.axis != tables[t]) continue;
            std::printf("%-16s %10.4f %10.4f\n", row.id.c_str(), row.psnr, row.ssim);
            if (csv) csv << row.axis << "," << row.id << "," << row.psnr << "," << row.ssim << "\n";
        }
    }
    return 0;
}

int cmd_gradcheck(int seeds) {
    auto cases = itsrn::standard_grad_cases();
    auto report = itsrn::check_gradients(cases, seeds);
    std::printf("%-28s %14s %10s %12s\n", "op", "max_rel_err", "elements", "noise_floor");
    bool ok = true;
    for (const auto& row : report.rows) {
        std::printf("%-28s %14.3e %10lld %12lld\n", row.op.c_str(), row.max_rel_err,
                    static_cast<long long>(row.elements_checked),
                    static_cast<long long>(row.noise_floor_elements));
        ok = ok && row.max_rel_err <= 1e-4;
    }
    std::printf("%s (tolerance 1e-4, %d seeds)\n", ok ? "PASS" : "FAIL", seeds);
    return ok ? 0 : 1;
}

int cmd_spectrum(const std::string& model_path, const std::string& in_path, std::int64_t stage,
                 std::int64_t block, const std::string& out_prefix) {
    require_file(model_path, "model checkpoint");
    require_file(in_path, "input image");
    auto model = itsrn::load_model<float>(model_path);
    auto img = itsrn::data::load_ppm<float>(in_path);
    auto rep = itsrn::evalm::branch_spectrum(model, img, stage, block);
    write_spectrum_ppm(rep.conv_mag, out_prefix + "_conv.ppm");
    write_spectrum_ppm(rep.attn_mag, out_prefix + "_attn.ppm");
    std::printf("high-frequency energy ratio: conv-branch %.6f, attention-branch %.6f\n",
                rep.conv_hf_ratio, rep.attn_hf_ratio);
    return 0;
}

int cmd_synth(std::int64_t n, std::uint64_t seed, const std::string& out_dir, std::int64_t height,
              std::int64_t width) {
    fs::create_directories(out_dir);
    for (std::int64_t i = 0; i < n; ++i) {
        auto img = itsrn::data::synth_sci<float>(seed + static_cast<std::uint64_t>(i), height, width);
        char name[64];
        std::snprintf(name, sizeof(name), "sci_%05llu.ppm",
                      static_cast<unsigned long long>(seed + static_cast<std::uint64_t>(i)));
        itsrn::data::save_ppm(img, (fs::path(out_dir) / name).string());
    }
    std::printf("wrote %lld images to %s\n", static_cast<long long>(n), out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"itsrn: continuous screen-content super-resolution"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (0 = hardware)");

    // sr
    auto* sr = app.add_subcommand("sr", "upsample one image at an arbitrary scale");
    std::string sr_model, sr_in, sr_out;
    double sr_scale = 2.0;
    sr->add_option("--model", sr_model, "model checkpoint")->required();
    sr->add_option("--in", sr_in, "input PPM")->required();
    sr->add_option("--scale", sr_scale, "upsampling ratio in [1, 64]")->required();
    sr->add_option("--out", sr_out, "output PPM")->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    std::string tr_config, tr_data, tr_out, tr_resume, tr_manifest;
    std::uint64_t tr_seed = 0;
    tr->add_option("--config", tr_config, "JSON config file")->required();
    tr->add_option("--data", tr_data, "directory of .ppm training images")->required();
    tr->add_option("--out", tr_out, "output directory (checkpoints + metrics log)")->required();
    tr->add_option("--seed", tr_seed, "rng seed");
    tr->add_option("--resume", tr_resume, "resume from a training checkpoint");
    tr->add_option("--manifest", tr_manifest, "newline-delimited filename list");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate PSNR/SSIM over a directory");
    std::string ev_model, ev_data, ev_scales = "2,3,4", ev_csv, ev_manifest;
    ev->add_option("--model", ev_model, "model checkpoint")->required();
    ev->add_option("--data", ev_data, "directory of .ppm images")->required();
    ev->add_option("--scales", ev_scales, "comma-separated scales");
    ev->add_option("--csv", ev_csv, "also write a CSV report");
    ev->add_option("--manifest", ev_manifest, "newline-delimited filename list");

    // ablate
    auto* ab = app.add_subcommand("ablate", "run the desk-scale ablation grid");
    std::string ab_data, ab_csv, ab_manifest;
    std::uint64_t ab_seed = 7;
    std::int64_t ab_steps = 120, ab_patch = 16, ab_batch = 2;
    double ab_scale = 2.0;
    ab->add_option("--data", ab_data, "directory of .ppm images")->required();
    ab->add_option("--csv", ab_csv, "also write a CSV report");
    ab->add_option("--seed", ab_seed, "shared rng seed");
    ab->add_option("--steps", ab_steps, "training steps per configuration");
    ab->add_option("--patch", ab_patch, "LR patch size");
    ab->add_option("--batch", ab_batch, "batch size");
    ab->add_option("--eval-scale", ab_scale, "evaluation scale");
    ab->add_option("--manifest", ab_manifest, "newline-delimited filename list");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all registered ops");
    int gc_seeds = 3;
    gc->add_option("--seeds", gc_seeds, "seeds per case");

    // spectrum
    auto* sp = app.add_subcommand("spectrum", "branch spectra of one dual-branch block");
    std::string sp_model, sp_in, sp_prefix = "spectrum";
    std::int64_t sp_stage = 0, sp_block = 0;
    sp->add_option("--model", sp_model, "model checkpoint")->required();
    sp->add_option("--in", sp_in, "input PPM")->required();
    sp->add_option("--stage", sp_stage, "stage index")->required();
    sp->add_option("--block", sp_block, "block index within the stage")->required();
    sp->add_option("--out-prefix", sp_prefix, "output prefix for the two spectrum images");

    // synth
    auto* sy = app.add_subcommand("synth", "generate synthetic screen-content images");
    std::string sy_out = ".";
    std::int64_t sy_n = 1, sy_h = 64, sy_w = 64;
    std::uint64_t sy_seed = 0;
    sy->add_option("--n", sy_n, "number of images")->required();
    sy->add_option("--seed", sy_seed, "base seed");
    sy->add_option("--out", sy_out, "output directory");
    sy->add_option("--height", sy_h, "image height");
    sy->add_option("--width", sy_w, "image width");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    itsrn::set_thread_count(threads);

    try {
        if (*sr) return cmd_sr(sr_model, sr_in, sr_scale, sr_out);
        if (*tr) return cmd_train(tr_config, tr_data, tr_out, tr_seed, tr_resume, tr_manifest);
        if (*ev) return cmd_eval(ev_model, ev_data, ev_scales, ev_csv, ev_manifest);
        if (*ab)
            return cmd_ablate(ab_data, ab_csv, ab_seed, ab_steps, ab_patch, ab_batch, ab_scale,
                              ab_manifest);
        if (*gc) return cmd_gradcheck(gc_seeds);
        if (*sp) return cmd_spectrum(sp_model, sp_in, sp_stage, sp_block, sp_prefix);
        if (*sy) return cmd_synth(sy_n, sy_seed, sy_out, sy_h, sy_w);
    } catch (const usage_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
