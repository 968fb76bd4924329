#pragma once

// Checkpoint container and the JSON form of the model configuration.
//
// File layout: magic "ITSR" | u32 version (LE) | u64 manifest length (LE) |
// UTF-8 JSON manifest | raw little-endian scalar payload. The manifest lists
// every tensor (name, dtype, shape, offset, bytes) plus a config echo and a
// free-form extras map (training state). Round trips are bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "itsrn/model.hpp"

namespace itsrn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in host order and specified little-endian");

inline constexpr char kCheckpointMagic[4] = {'I', 'T', 'S', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// --- config <-> json ---

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw format_error("unknown key \"" + it.key() + "\" in " + where);
    }
}

}  // namespace detail

inline nlohmann::json to_json(const ModelConfig& cfg) {
    nlohmann::json b{{"shallow_channels", cfg.backbone.shallow_channels},
                     {"blocks", cfg.backbone.blocks},
                     {"channels", cfg.backbone.channels},
                     {"alphas", cfg.backbone.alphas},
                     {"window", cfg.backbone.window},
                     {"heads", cfg.backbone.heads},
                     {"ffn_expansion", cfg.backbone.ffn_expansion},
                     {"ca_reduction", cfg.backbone.ca_reduction},
                     {"global_residual", cfg.backbone.global_residual},
                     {"branch_mode", branch_mode_name(cfg.backbone.branch_mode)}};
    nlohmann::json u{{"c_up", cfg.upsampler.c_up},
                     {"phi_hidden", cfg.upsampler.phi_hidden},
                     {"variant", variant_name(cfg.upsampler.variant)},
                     {"reweight", reweight_name(cfg.upsampler.reweight)}};
    return nlohmann::json{
        {"preset", cfg.preset}, {"precision", cfg.precision}, {"backbone", b}, {"upsampler", u}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, {"preset", "precision", "backbone", "upsampler"}, "model config");
    ModelConfig cfg;
    if (j.contains("preset")) {
        const std::string p = j.at("preset").get<std::string>();
        if (p == "paper")
            cfg = ModelConfig::paper();
        else if (p == "desk")
            cfg = ModelConfig::desk();
        else if (p == "custom")
            cfg.preset = "custom";
        else
            throw format_error("model config: unknown preset \"" + p + "\"");
    }
    if (j.contains("precision")) cfg.precision = j.at("precision").get<std::string>();
    if (j.contains("backbone")) {
        const auto& b = j.at("backbone");
        detail::reject_unknown_keys(b,
                                    {"shallow_channels", "blocks", "channels", "alphas", "window",
                                     "heads", "ffn_expansion", "ca_reduction", "global_residual",
                                     "branch_mode"},
                                    "backbone config");
        auto& c = cfg.backbone;
        if (b.contains("shallow_channels")) c.shallow_channels = b.at("shallow_channels").get<std::int64_t>();
        if (b.contains("blocks")) c.blocks = b.at("blocks").get<std::vector<std::int64_t>>();
        if (b.contains("channels")) c.channels = b.at("channels").get<std::vector<std::int64_t>>();
        if (b.contains("alphas")) c.alphas = b.at("alphas").get<std::vector<double>>();
        if (b.contains("window")) c.window = b.at("window").get<std::int64_t>();
        if (b.contains("heads")) c.heads = b.at("heads").get<std::int64_t>();
        if (b.contains("ffn_expansion")) c.ffn_expansion = b.at("ffn_expansion").get<std::int64_t>();
        if (b.contains("ca_reduction")) c.ca_reduction = b.at("ca_reduction").get<std::int64_t>();
        if (b.contains("global_residual")) c.global_residual = b.at("global_residual").get<bool>();
        if (b.contains("branch_mode"))
            c.branch_mode = parse_branch_mode(b.at("branch_mode").get<std::string>());
    }
    if (j.contains("upsampler")) {
        const auto& u = j.at("upsampler");
        detail::reject_unknown_keys(u, {"c_up", "phi_hidden", "variant", "reweight"},
                                    "upsampler config");
        if (u.contains("c_up")) cfg.upsampler.c_up = u.at("c_up").get<std::int64_t>();
        if (u.contains("phi_hidden")) cfg.upsampler.phi_hidden = u.at("phi_hidden").get<std::int64_t>();
        if (u.contains("variant"))
            cfg.upsampler.variant = parse_variant(u.at("variant").get<std::string>());
        if (u.contains("reweight"))
            cfg.upsampler.reweight = parse_reweight(u.at("reweight").get<std::string>());
    }
    cfg.validate();
    return cfg;
}

// --- file io ---

template <typename T>
constexpr const char* dtype_name() {
    if constexpr (sizeof(T) == 4) return "f32";
    else return "f64";
}

template <typename T>
void write_checkpoint(const std::string& path, const ModelConfig& cfg,
                      const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors,
                      const std::map<std::string, std::string>& extras = {}) {
    nlohmann::json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["config"] = to_json(cfg);
    manifest["dtype"] = dtype_name<T>();
    manifest["extras"] = extras;

    std::uint64_t offset = 0;
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
        const std::uint64_t bytes = static_cast<std::uint64_t>(t->numel()) * sizeof(T);
        dir.push_back(nlohmann::json{
            {"name", name}, {"dtype", dtype_name<T>()}, {"shape", t->shape()}, {"offset", offset},
            {"bytes", bytes}});
        offset += bytes;
    }
    manifest["tensors"] = std::move(dir);

    const std::string text = manifest.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("checkpoint: cannot open for writing: " + path);
    out.write(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t mlen = text.size();
    out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->numel() * static_cast<std::int64_t>(sizeof(T))));
    if (!out) throw format_error("checkpoint: write failed: " + path);
}

template <typename T>
void save_model(const Model<T>& model, const std::string& path,
                const std::map<std::string, std::string>& extras = {},
                const std::vector<std::pair<std::string, const Tensor<T>*>>& extra_tensors = {}) {
    std::vector<std::pair<std::string, const Tensor<T>*>> tensors;
    const_cast<Model<T>&>(model).visit(
        [&](const std::string& name, Tensor<T>& t) { tensors.emplace_back(name, &t); });
    for (const auto& e : extra_tensors) tensors.push_back(e);
    write_checkpoint(path, model.config, tensors, extras);
}

template <typename T>
struct LoadedCheckpoint {
    ModelConfig config;
    std::map<std::string, Tensor<T>> tensors;
    std::map<std::string, std::string> extras;
};

template <typename T>
LoadedCheckpoint<T> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("checkpoint: cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw format_error("checkpoint: bad magic in " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kCheckpointVersion)
        throw format_error("checkpoint: unknown format version " + std::to_string(version));
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    if (!in) throw format_error("checkpoint: truncated header in " + path);
    std::string text(mlen, '\0');
    in.read(text.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw format_error("checkpoint: truncated manifest in " + path);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw format_error(std::string("checkpoint: corrupt manifest: ") + e.what());
    }

    LoadedCheckpoint<T> ck;
    ck.config = model_config_from_json(manifest.at("config"));
    if (manifest.at("dtype").get<std::string>() != dtype_name<T>())
        throw format_error("checkpoint: dtype " + manifest.at("dtype").get<std::string>() +
                           " does not match the requested precision");
    if (manifest.contains("extras"))
        ck.extras = manifest.at("extras").get<std::map<std::string, std::string>>();

    const std::uint64_t payload_begin = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t) + mlen;
    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());

    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<Shape>();
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        const std::uint64_t bytes = entry.at("bytes").get<std::uint64_t>();
        if (bytes != static_cast<std::uint64_t>(shape_numel(shape)) * sizeof(T))
            throw format_error("checkpoint: inconsistent byte count for tensor " + name);
        if (payload_begin + offset + bytes > file_size)
            throw format_error("checkpoint: payload truncated, missing tensor " + name);
        Tensor<T> t(shape);
        in.seekg(static_cast<std::streamoff>(payload_begin + offset));
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(bytes));
        if (!in) throw format_error("checkpoint: payload truncated, missing tensor " + name);
        ck.tensors.emplace(name, std::move(t));
    }
    return ck;
}

// Rebuilds a model from a checkpoint. When expected is given, its shapes are
// authoritative and the first mismatch is reported.
template <typename T>
Model<T> model_from_checkpoint(const LoadedCheckpoint<T>& ck,
                               const ModelConfig* expected = nullptr) {
    const ModelConfig& cfg = expected ? *expected : ck.config;
    Model<T> model = Model<T>::init(cfg, /*seed=*/0);
    std::string err;
    model.visit([&](const std::string& name, Tensor<T>& t) {
        if (!err.empty()) return;
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) {
            err = "checkpoint: missing tensor " + name;
            return;
        }
        if (it->second.shape() != t.shape()) {
            err = "checkpoint: shape mismatch for " + name + ": file has " +
                  shape_str(it->second.shape()) + ", config expects " + shape_str(t.shape());
            return;
        }
        t = it->second;
    });
    if (!err.empty()) {
        if (err.find("shape mismatch") != std::string::npos) throw shape_error(err);
        throw format_error(err);
    }
    return model;
}

template <typename T>
Model<T> load_model(const std::string& path, const ModelConfig* expected = nullptr) {
    auto ck = read_checkpoint<T>(path);
    return model_from_checkpoint(ck, expected);
}

}  // namespace itsrn
