#pragma once

// L1 training loop: multi-scale batches, query-sparse forward through the
// upsampler (the backbone still sees the full LR patch), reverse-mode
// gradients, bias-corrected Adam, and a step-decay schedule. Checkpoints
// carry optimizer moments and the sampler RNG state so a resumed run
// continues bit-identically.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "itsrn/checkpoint.hpp"
#include "itsrn/data.hpp"
#include "itsrn/model.hpp"

namespace itsrn::train {

template <typename T>
T l1_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
    if (!pred.same_shape(gt))
        throw shape_error("l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                          shape_str(gt.shape()));
    T s{0};
    for (std::int64_t i = 0; i < pred.numel(); ++i) s += std::abs(pred[i] - gt[i]);
    return s / static_cast<T>(pred.numel());
}

struct Schedule {
    double base_lr = 2e-4;
    std::vector<double> decay_fractions{0.4, 0.8, 0.9, 0.95};
    double decay_factor = 0.5;
    std::int64_t total_steps = 1000;

    double lr_at(std::int64_t step) const {
        double lr = base_lr;
        for (double f : decay_fractions)
            if (static_cast<double>(step) >= f * static_cast<double>(total_steps)) lr *= decay_factor;
        return lr;
    }
};

template <typename T>
struct OptimState {
    std::vector<Tensor<T>> m, v;  // aligned with the model's visit order
    std::int64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void reset(const std::vector<Tensor<T>*>& params) {
        m.clear();
        v.clear();
        for (const auto* p : params) {
            m.emplace_back(p->shape());
            v.emplace_back(p->shape());
        }
        t = 0;
    }
};

// Standard bias-corrected Adam update, in place.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
               OptimState<T>& st, double lr) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw contract_error("adam_step: parameter/gradient/state counts differ");
    st.t += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = grads[i];
        Tensor<T>& m = st.m[i];
        Tensor<T>& v = st.v[i];
        for (std::int64_t e = 0; e < p.numel(); ++e) {
            m[e] = static_cast<T>(st.beta1 * m[e] + (1.0 - st.beta1) * g[e]);
            v[e] = static_cast<T>(st.beta2 * v[e] + (1.0 - st.beta2) * g[e] * g[e]);
            const double mh = m[e] / bc1;
            const double vh = v[e] / bc2;
            p[e] = static_cast<T>(p[e] - lr * mh / (std::sqrt(vh) + st.eps));
        }
    }
}

struct TrainConfig {
    std::int64_t steps = 500;
    std::int64_t batch = 4;
    std::int64_t patch = 24;
    double scale_min = 1.0, scale_max = 2.0;
    double base_lr = 2e-4;
    std::vector<double> decay_fractions{0.4, 0.8, 0.9, 0.95};
    double decay_factor = 0.5;
    double augment_prob = 0.5;
    std::int64_t checkpoint_every = 100;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool log_walltime = true;
    std::string resume_from;  // optional training checkpoint
};

template <typename T>
struct TrainResult {
    std::string final_checkpoint;
    std::vector<double> losses;
};

namespace detail {

template <typename T>
std::vector<Tensor<T>*> collect_params(Model<T>& model) {
    std::vector<Tensor<T>*> out;
    model.visit([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
    return out;
}

template <typename T>
void save_train_checkpoint(Model<T>& model, const OptimState<T>& st, const Rng& rng,
                           std::int64_t next_step, const TrainConfig& cfg,
                           const std::string& path) {
    std::vector<std::pair<std::string, const Tensor<T>*>> extra;
    std::size_t i = 0;
    model.visit([&](const std::string& name, Tensor<T>&) {
        extra.emplace_back("opt.m." + name, &st.m[i]);
        extra.emplace_back("opt.v." + name, &st.v[i]);
        ++i;
    });
    std::map<std::string, std::string> extras;
    extras["step"] = std::to_string(next_step);
    extras["adam_t"] = std::to_string(st.t);
    extras["rng"] = rng.serialize();
    extras["total_steps"] = std::to_string(cfg.steps);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.scale_max);
    extras["train_scale_max"] = buf;
    save_model(model, path, extras, extra);
}

}  // namespace detail

// One optimizer thread; the tape is rebuilt per step and consumed once.
template <typename T>
TrainResult<T> train_loop(Model<T>& model, const std::vector<data::Image<T>>& pool,
                          const TrainConfig& cfg) {
    namespace fs = std::filesystem;
    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
    const std::string log_path =
        cfg.out_dir.empty() ? "" : (fs::path(cfg.out_dir) / "metrics.log").string();
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::trunc);
        if (!log) throw format_error("train: cannot open metrics log: " + log_path);
    }

    auto params = detail::collect_params(model);
    OptimState<T> st;
    st.reset(params);
    Rng rng(cfg.seed);
    std::int64_t start_step = 0;

    if (!cfg.resume_from.empty()) {
        auto ck = read_checkpoint<T>(cfg.resume_from);
        model = model_from_checkpoint(ck);
        params = detail::collect_params(model);
        st.reset(params);
        std::size_t i = 0;
        model.visit([&](const std::string& name, Tensor<T>&) {
            auto mit = ck.tensors.find("opt.m." + name);
            auto vit = ck.tensors.find("opt.v." + name);
            if (mit == ck.tensors.end() || vit == ck.tensors.end())
                throw format_error("train: checkpoint lacks optimizer state for " + name);
            st.m[i] = mit->second;
            st.v[i] = vit->second;
            ++i;
        });
        st.t = std::stoll(ck.extras.at("adam_t"));
        rng.deserialize(ck.extras.at("rng"));
        start_step = std::stoll(ck.extras.at("step"));
    }

    Schedule sched;
    sched.base_lr = cfg.base_lr;
    sched.decay_fractions = cfg.decay_fractions;
    sched.decay_factor = cfg.decay_factor;
    sched.total_steps = cfg.steps;

    TrainResult<T> result;
    for (std::int64_t step = start_step; step < cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        auto batch = data::make_batch(pool, cfg.batch, cfg.patch, cfg.patch, cfg.scale_min,
                                      cfg.scale_max, rng, cfg.augment_prob);

        Tape<T> tape;
        TapeCtx<T> ctx(tape);
        Var loss{};
        for (std::int64_t s = 0; s < cfg.batch; ++s) {
            auto feats = backbone_forward(ctx, model.backbone, model.config.backbone,
                                          ctx.constant(batch.lr_patches[static_cast<std::size_t>(s)]),
                                          cfg.patch, cfg.patch);
            auto prep = prepare_features(ctx, model.upsampler, feats, cfg.patch, cfg.patch);
            auto qs = point_queries<T>(cfg.patch, cfg.patch,
                                       batch.gt_coords[static_cast<std::size_t>(s)],
                                       batch.cells[static_cast<std::size_t>(s)].s_h,
                                       batch.cells[static_cast<std::size_t>(s)].s_w);
            auto rgb = upsample_queries(ctx, model.upsampler, prep, qs);
            Var li = tape.l1_loss(rgb, batch.gt_pixels[static_cast<std::size_t>(s)]);
            loss = s == 0 ? li : tape.add(loss, li);
        }
        loss = tape.scale(loss, static_cast<T>(1.0 / static_cast<double>(cfg.batch)));
        const double loss_value = static_cast<double>(tape.value(loss)[0]);
        if (!std::isfinite(loss_value)) {
            if (log)
                log << "abort\tstep=" << step + 1 << "\tloss=" << loss_value << "\n" << std::flush;
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step + 1) +
                                     " (diagnostic written to metrics log)");
        }
        tape.backward(loss);

        std::vector<Tensor<T>> grads;
        grads.reserve(params.size());
        for (auto* p : params) grads.push_back(tape.grad_of(*p));
        const double lr = sched.lr_at(step);
        adam_step(params, grads, st, lr);

        result.losses.push_back(loss_value);
        const auto t1 = std::chrono::steady_clock::now();
        const auto wall_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
        if (log) {
            char line[160];
            std::snprintf(line, sizeof(line), "%lld\t%.10g\t%.10g", static_cast<long long>(step + 1),
                          lr, loss_value);
            log << line;
            if (cfg.log_walltime) log << "\t" << wall_ms;
            log << "\n" << std::flush;
        }

        const bool last = step + 1 == cfg.steps;
        if (!cfg.out_dir.empty() &&
            (last || (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0))) {
            char name[64];
            std::snprintf(name, sizeof(name), "ckpt_%06lld.itsr", static_cast<long long>(step + 1));
            const std::string path = (fs::path(cfg.out_dir) / name).string();
            detail::save_train_checkpoint(model, st, rng, step + 1, cfg, path);
            if (last) {
                const std::string final_path = (fs::path(cfg.out_dir) / "final.itsr").string();
                detail::save_train_checkpoint(model, st, rng, step + 1, cfg, final_path);
                result.final_checkpoint = final_path;
            }
        }
    }
    return result;
}

}  // namespace itsrn::train
