#pragma once

// Feature extraction backbone: a shallow 3x3 conv, four stages of residual
// blocks at per-stage widths, a trailing 3x3 conv per stage that also carries
// the channel transition, and a global residual from the shallow feature.
// Dual-branch blocks (DBB) run window attention and a depthwise conv branch
// on the value map in parallel; single-branch blocks (SBB) keep only a conv
// path (3x3-ReLU-3x3-CA). Attention blocks alternate regular and half-window
// shifted partitions with the usual cyclic-shift mask.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "itsrn/ctx.hpp"
#include "itsrn/params.hpp"
#include "itsrn/upsampler.hpp"

namespace itsrn {

enum class BranchMode { parallel, sequential, attention_only, conv_only };

inline const char* branch_mode_name(BranchMode m) {
    switch (m) {
        case BranchMode::parallel: return "parallel";
        case BranchMode::sequential: return "sequential";
        case BranchMode::attention_only: return "attention_only";
        case BranchMode::conv_only: return "conv_only";
    }
    return "?";
}

inline BranchMode parse_branch_mode(const std::string& s) {
    if (s == "parallel") return BranchMode::parallel;
    if (s == "sequential") return BranchMode::sequential;
    if (s == "attention_only") return BranchMode::attention_only;
    if (s == "conv_only") return BranchMode::conv_only;
    throw format_error("unknown branch mode: " + s);
}

struct BackboneConfig {
    std::int64_t shallow_channels = 64;
    std::vector<std::int64_t> blocks{2, 8, 8, 16};
    std::vector<std::int64_t> channels{64, 64, 128, 192};
    std::vector<double> alphas{0.0, 0.25, 0.25, 0.75};
    std::int64_t window = 16;
    std::int64_t heads = 8;
    std::int64_t ffn_expansion = 2;
    std::int64_t ca_reduction = 4;
    bool global_residual = true;
    BranchMode branch_mode = BranchMode::parallel;

    std::int64_t num_stages() const { return static_cast<std::int64_t>(blocks.size()); }

    std::int64_t dbb_count(std::int64_t stage) const {
        return static_cast<std::int64_t>(
            std::llround(alphas[static_cast<std::size_t>(stage)] *
                         static_cast<double>(blocks[static_cast<std::size_t>(stage)])));
    }

    void validate() const {
        if (blocks.empty() || blocks.size() != channels.size() || blocks.size() != alphas.size())
            throw format_error("backbone config: blocks/channels/alphas must have equal length");
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (blocks[i] < 1) throw format_error("backbone config: stage needs >= 1 block");
            if (alphas[i] < 0.0 || alphas[i] > 1.0)
                throw format_error("backbone config: alpha must lie in [0,1]");
            if (channels[i] % heads != 0)
                throw format_error("backbone config: channels must be divisible by heads");
        }
        if (window < 1) throw format_error("backbone config: window must be >= 1");
    }
};

template <typename T>
struct AttnProjParams {
    LinearParams<T> q, k, o;  // C -> C (v comes from the shared value projection)
    Tensor<T> bias_table;     // [(2M-1)^2, heads]

    void init(std::int64_t c, std::int64_t window, std::int64_t heads, Rng& rng) {
        q.init(c, c, rng);
        k.init(c, c, rng);
        o.init(c, c, rng);
        bias_table = Tensor<T>({(2 * window - 1) * (2 * window - 1), heads});
        fill_trunc_normal(bias_table, rng);
    }

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        q.visit(prefix + ".q", v);
        k.visit(prefix + ".k", v);
        o.visit(prefix + ".o", v);
        v(prefix + ".bias_table", bias_table);
    }
};

template <typename T>
struct BlockParams {
    bool is_dbb = false;
    bool shifted = false;
    LayerNormParams<T> ln1, ln2;
    LinearParams<T> v_proj;      // C -> C
    AttnProjParams<T> attn;      // DBB only
    DWConvParams<T> dw;          // DBB: depthwise 5x5
    ConvParams<T> pw;            // DBB: pointwise 1x1
    ConvParams<T> conv1, conv2;  // SBB: two 3x3
    CAParams<T> ca;
    LinearParams<T> post_sum;    // C -> C
    LinearParams<T> ffn1, ffn2;  // C -> eC -> C

    void init(std::int64_t c, bool dbb, bool shift, const BackboneConfig& cfg, Rng& rng) {
        is_dbb = dbb;
        shifted = shift;
        ln1.init(c);
        ln2.init(c);
        v_proj.init(c, c, rng);
        if (dbb) {
            attn.init(c, cfg.window, cfg.heads, rng);
            dw.init(c, 5, rng);
            pw.init(c, c, 1, rng);
        } else {
            conv1.init(c, c, 3, rng);
            conv2.init(c, c, 3, rng);
        }
        ca.init(c, cfg.ca_reduction, rng);
        post_sum.init(c, c, rng);
        ffn1.init(c, c * cfg.ffn_expansion, rng);
        ffn2.init(c * cfg.ffn_expansion, c, rng);
    }

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        ln1.visit(prefix + ".ln1", v);
        ln2.visit(prefix + ".ln2", v);
        v_proj.visit(prefix + ".v_proj", v);
        if (is_dbb) {
            attn.visit(prefix + ".attn", v);
            dw.visit(prefix + ".dw", v);
            pw.visit(prefix + ".pw", v);
        } else {
            conv1.visit(prefix + ".conv1", v);
            conv2.visit(prefix + ".conv2", v);
        }
        ca.visit(prefix + ".ca", v);
        post_sum.visit(prefix + ".post_sum", v);
        ffn1.visit(prefix + ".ffn1", v);
        ffn2.visit(prefix + ".ffn2", v);
    }
};

template <typename T>
struct StageParams {
    std::vector<BlockParams<T>> blocks;
    ConvParams<T> trans;  // trailing 3x3, also the channel transition

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].visit(prefix + ".block" + std::to_string(i), v);
        trans.visit(prefix + ".trans", v);
    }
};

template <typename T>
struct BackboneParams {
    ConvParams<T> shallow;  // 3 -> shallow_channels
    std::vector<StageParams<T>> stages;

    // Within a stage SBBs come first, then DBBs; DBBs alternate regular and
    // shifted partitions.
    void init(const BackboneConfig& cfg, Rng& rng) {
        cfg.validate();
        shallow.init(cfg.shallow_channels, 3, 3, rng);
        stages.clear();
        std::int64_t ch = cfg.shallow_channels;
        for (std::int64_t s = 0; s < cfg.num_stages(); ++s) {
            const std::int64_t c = cfg.channels[static_cast<std::size_t>(s)];
            const std::int64_t n = cfg.blocks[static_cast<std::size_t>(s)];
            const std::int64_t n_dbb = cfg.dbb_count(s);
            StageParams<T> stage;
            for (std::int64_t b = 0; b < n; ++b) {
                const bool dbb = b >= n - n_dbb;
                const std::int64_t attn_ordinal = dbb ? b - (n - n_dbb) : 0;
                BlockParams<T> block;
                block.init(c, dbb, dbb && (attn_ordinal % 2 == 1), cfg, rng);
                stage.blocks.push_back(std::move(block));
            }
            const std::int64_t next =
                s + 1 < cfg.num_stages() ? cfg.channels[static_cast<std::size_t>(s + 1)]
                                         : cfg.shallow_channels;
            stage.trans.init(next, c, 3, rng);
            stages.push_back(std::move(stage));
            ch = next;
        }
        (void)ch;
    }

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        shallow.visit(prefix + ".shallow", v);
        for (std::size_t i = 0; i < stages.size(); ++i)
            stages[i].visit(prefix + ".stage" + std::to_string(i), v);
    }
};

// --- window geometry ---

namespace winutil {

// Symmetric reflection (edge included), total for any pad width.
inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * n;
    std::int64_t m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

inline IndexMap reflect_pad_map(std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t hp,
                                std::int64_t wp, std::int64_t top = 0, std::int64_t left = 0) {
    IndexMap m;
    m.out_shape = {c, hp, wp};
    m.src.resize(static_cast<std::size_t>(c * hp * wp));
    std::size_t at = 0;
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < hp; ++y) {
            const std::int64_t sy = reflect_index(y - top, h);
            for (std::int64_t x = 0; x < wp; ++x, ++at)
                m.src[at] = (ch * h + sy) * w + reflect_index(x - left, w);
        }
    return m;
}

inline IndexMap crop_map(std::int64_t c, std::int64_t hp, std::int64_t wp, std::int64_t h,
                         std::int64_t w, std::int64_t top = 0, std::int64_t left = 0) {
    IndexMap m;
    m.out_shape = {c, h, w};
    m.src.resize(static_cast<std::size_t>(c * h * w));
    std::size_t at = 0;
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x, ++at)
                m.src[at] = (ch * hp + y + top) * wp + x + left;
    return m;
}

// out[y][x] = in[(y+dy) mod h][(x+dx) mod w]
inline IndexMap roll_map(std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t dy,
                         std::int64_t dx) {
    IndexMap m;
    m.out_shape = {c, h, w};
    m.src.resize(static_cast<std::size_t>(c * h * w));
    std::size_t at = 0;
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < h; ++y) {
            const std::int64_t sy = ((y + dy) % h + h) % h;
            for (std::int64_t x = 0; x < w; ++x, ++at) {
                const std::int64_t sx = ((x + dx) % w + w) % w;
                m.src[at] = (ch * h + sy) * w + sx;
            }
        }
    return m;
}

// [C, Hp, Wp] -> [nW*M*M, C] window token matrix, windows and intra-window
// tokens both row-major.
inline IndexMap partition_map(std::int64_t c, std::int64_t hp, std::int64_t wp, std::int64_t m_win) {
    const std::int64_t wy = hp / m_win, wx = wp / m_win;
    IndexMap m;
    m.out_shape = {wy * wx * m_win * m_win, c};
    m.src.resize(static_cast<std::size_t>(m.out_shape[0] * c));
    std::size_t at = 0;
    for (std::int64_t gy = 0; gy < wy; ++gy)
        for (std::int64_t gx = 0; gx < wx; ++gx)
            for (std::int64_t ty = 0; ty < m_win; ++ty)
                for (std::int64_t tx = 0; tx < m_win; ++tx)
                    for (std::int64_t ch = 0; ch < c; ++ch, ++at)
                        m.src[at] = (ch * hp + gy * m_win + ty) * wp + gx * m_win + tx;
    return m;
}

inline IndexMap unpartition_map(std::int64_t c, std::int64_t hp, std::int64_t wp,
                                std::int64_t m_win) {
    const std::int64_t wx = wp / m_win;
    IndexMap m;
    m.out_shape = {c, hp, wp};
    m.src.resize(static_cast<std::size_t>(c * hp * wp));
    std::size_t at = 0;
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < hp; ++y)
            for (std::int64_t x = 0; x < wp; ++x, ++at) {
                const std::int64_t win = (y / m_win) * wx + x / m_win;
                const std::int64_t tok = (y % m_win) * m_win + x % m_win;
                m.src[at] = (win * m_win * m_win + tok) * c + ch;
            }
    return m;
}

inline std::vector<std::int32_t> relative_position_index(std::int64_t m_win) {
    const std::int64_t m2 = m_win * m_win;
    std::vector<std::int32_t> idx(static_cast<std::size_t>(m2 * m2));
    for (std::int64_t i = 0; i < m2; ++i)
        for (std::int64_t j = 0; j < m2; ++j) {
            const std::int64_t dy = i / m_win - j / m_win + (m_win - 1);
            const std::int64_t dx = i % m_win - j % m_win + (m_win - 1);
            idx[static_cast<std::size_t>(i * m2 + j)] =
                static_cast<std::int32_t>(dy * (2 * m_win - 1) + dx);
        }
    return idx;
}

// Region labels in shifted coordinates; token pairs whose labels differ get
// a large negative pre-softmax term.
template <typename T>
Tensor<T> shift_attention_mask(std::int64_t hp, std::int64_t wp, std::int64_t m_win,
                               std::int64_t shift) {
    const std::int64_t wy = hp / m_win, wx = wp / m_win, m2 = m_win * m_win;
    auto label = [&](std::int64_t v, std::int64_t n) {
        if (v < n - m_win) return 0;
        if (v < n - shift) return 1;
        return 2;
    };
    Tensor<T> mask({wy * wx, m2, m2});
    for (std::int64_t gy = 0; gy < wy; ++gy)
        for (std::int64_t gx = 0; gx < wx; ++gx) {
            const std::int64_t w = gy * wx + gx;
            for (std::int64_t i = 0; i < m2; ++i) {
                const std::int64_t li = 3 * label(gy * m_win + i / m_win, hp) +
                                        label(gx * m_win + i % m_win, wp);
                for (std::int64_t j = 0; j < m2; ++j) {
                    const std::int64_t lj = 3 * label(gy * m_win + j / m_win, hp) +
                                            label(gx * m_win + j % m_win, wp);
                    mask[(w * m2 + i) * m2 + j] = li == lj ? T{0} : T{-100};
                }
            }
        }
    return mask;
}

}  // namespace winutil

// Kernel-level window partition round trip (reflect pad + optional cyclic
// shift + tokenization); window_reverse is its exact inverse.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::int64_t m_win, std::int64_t shift) {
    const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::int64_t hp = (h + m_win - 1) / m_win * m_win;
    const std::int64_t wp = (w + m_win - 1) / m_win * m_win;
    Tensor<T> padded = gather(x, winutil::reflect_pad_map(c, h, w, hp, wp));
    if (shift != 0) padded = gather(padded, winutil::roll_map(c, hp, wp, shift, shift));
    return gather(padded, winutil::partition_map(c, hp, wp, m_win));
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, std::int64_t m_win, std::int64_t shift,
                         std::int64_t h, std::int64_t w) {
    const std::int64_t c = windows.dim(1);
    const std::int64_t hp = (h + m_win - 1) / m_win * m_win;
    const std::int64_t wp = (w + m_win - 1) / m_win * m_win;
    Tensor<T> map = gather(windows, winutil::unpartition_map(c, hp, wp, m_win));
    if (shift != 0) map = gather(map, winutil::roll_map(c, hp, wp, -shift, -shift));
    return gather(map, winutil::crop_map(c, hp, wp, h, w));
}

// Captures the two pre-sum branch maps of one addressed DBB.
template <typename T>
struct BranchProbe {
    std::int64_t stage = -1, block = -1;
    Tensor<T> f_conv, f_attn;
    bool captured = false;
};

namespace detail {

// Backbone convolutions run on reflect-padded maps so they preserve
// constants up to the border (screen content dislikes dark halos); the
// zero-padding of the raw conv kernel never activates on the cropped center.
template <class Ctx, typename T>
typename Ctx::Value conv_reflect(Ctx& ctx, typename Ctx::Value x, const ConvParams<T>& p,
                                 std::int64_t c_in, std::int64_t h, std::int64_t w) {
    const std::int64_t k = p.w.dim(2), pad = (k - 1) / 2;
    if (pad == 0) return ctx.conv2d(x, ctx.use(p.w), ctx.use(p.b));
    const std::int64_t c_out = p.w.dim(0);
    auto padded = ctx.gather(x, winutil::reflect_pad_map(c_in, h, w, h + 2 * pad, w + 2 * pad, pad, pad));
    auto y = ctx.conv2d(padded, ctx.use(p.w), ctx.use(p.b));
    return ctx.gather(y, winutil::crop_map(c_out, h + 2 * pad, w + 2 * pad, h, w, pad, pad));
}

template <class Ctx, typename T>
typename Ctx::Value dwconv_reflect(Ctx& ctx, typename Ctx::Value x, const DWConvParams<T>& p,
                                   std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t k = p.w.dim(1), pad = (k - 1) / 2;
    auto padded = ctx.gather(x, winutil::reflect_pad_map(c, h, w, h + 2 * pad, w + 2 * pad, pad, pad));
    auto y = ctx.depthwise_conv2d(padded, ctx.use(p.w), ctx.use(p.b));
    return ctx.gather(y, winutil::crop_map(c, h + 2 * pad, w + 2 * pad, h, w, pad, pad));
}

template <class Ctx, typename T>
typename Ctx::Value channel_attention(Ctx& ctx, const CAParams<T>& ca, typename Ctx::Value map,
                                      std::int64_t c, std::int64_t h, std::int64_t w) {
    auto tok = ctx.gather(map, chw_to_tokens_map(c, h, w));
    auto pooled = ctx.mean_rows(tok);
    auto z = ctx.act(linear_fwd(ctx, pooled, ca.squeeze), Act::relu);
    auto gate = ctx.act(linear_fwd(ctx, z, ca.excite), Act::sigmoid);
    return ctx.gather(ctx.mul_rows(tok, gate), tokens_to_chw_map(c, h, w));
}

template <class Ctx, typename T>
typename Ctx::Value block_forward(Ctx& ctx, const BlockParams<T>& bp, const BackboneConfig& cfg,
                                  typename Ctx::Value x, std::int64_t c, std::int64_t h,
                                  std::int64_t w, bool want_probe, BranchProbe<T>* probe) {
    using Value = typename Ctx::Value;
    const auto to_tok = chw_to_tokens_map(c, h, w);
    const auto to_map = tokens_to_chw_map(c, h, w);

    auto tok = ctx.gather(x, to_tok);
    auto t1 = ctx.layer_norm_rows(tok, ctx.use(bp.ln1.gamma), ctx.use(bp.ln1.beta), T(1e-5));
    auto v_tok = linear_fwd(ctx, t1, bp.v_proj);
    auto v_map = ctx.gather(v_tok, to_map);

    const BranchMode mode = bp.is_dbb ? cfg.branch_mode : BranchMode::conv_only;
    const bool with_attn = bp.is_dbb && mode != BranchMode::conv_only;
    const bool with_conv = mode != BranchMode::attention_only;

    Value f_attn{};
    if (with_attn) {
        const std::int64_t m_win = cfg.window;
        const std::int64_t hp = (h + m_win - 1) / m_win * m_win;
        const std::int64_t wp = (w + m_win - 1) / m_win * m_win;
        const std::int64_t shift = bp.shifted ? m_win / 2 : 0;
        auto pad = winutil::reflect_pad_map(c, h, w, hp, wp);
        auto part = winutil::partition_map(c, hp, wp, m_win);

        auto to_windows = [&](Value t) {
            Value map = ctx.gather(t, to_map);
            map = ctx.gather(map, pad);
            if (shift != 0) map = ctx.gather(map, winutil::roll_map(c, hp, wp, shift, shift));
            return ctx.gather(map, part);
        };
        Value qw = to_windows(linear_fwd(ctx, t1, bp.attn.q));
        Value kw = to_windows(linear_fwd(ctx, t1, bp.attn.k));
        Value vw = to_windows(v_tok);

        AttnPlan<T> plan;
        plan.num_windows = (hp / m_win) * (wp / m_win);
        plan.tokens = m_win * m_win;
        plan.heads = cfg.heads;
        plan.bias_index = winutil::relative_position_index(m_win);
        if (shift != 0) plan.mask = winutil::shift_attention_mask<T>(hp, wp, m_win, shift);

        Value att = ctx.window_attention(qw, kw, vw, ctx.use(bp.attn.bias_table), plan);
        Value merged = linear_fwd(ctx, att, bp.attn.o);
        Value map = ctx.gather(merged, winutil::unpartition_map(c, hp, wp, m_win));
        if (shift != 0) map = ctx.gather(map, winutil::roll_map(c, hp, wp, -shift, -shift));
        f_attn = ctx.gather(map, winutil::crop_map(c, hp, wp, h, w));
    }

    Value f_conv{};
    if (with_conv) {
        Value conv_in = (mode == BranchMode::sequential) ? f_attn : v_map;
        Value y{};
        if (bp.is_dbb) {
            y = dwconv_reflect(ctx, conv_in, bp.dw, c, h, w);
            y = ctx.act(y, Act::relu);
            y = ctx.conv2d(y, ctx.use(bp.pw.w), ctx.use(bp.pw.b));  // 1x1, no padding
        } else {
            y = conv_reflect(ctx, conv_in, bp.conv1, c, h, w);
            y = ctx.act(y, Act::relu);
            y = conv_reflect(ctx, y, bp.conv2, c, h, w);
        }
        f_conv = channel_attention(ctx, bp.ca, y, c, h, w);
    }

    if (want_probe && probe) {
        if (with_conv) probe->f_conv = ctx.peek(f_conv);
        if (with_attn) probe->f_attn = ctx.peek(f_attn);
        probe->captured = true;
    }

    Value branch_sum{};
    switch (mode) {
        case BranchMode::parallel: branch_sum = ctx.add(f_attn, f_conv); break;
        case BranchMode::sequential: branch_sum = f_conv; break;
        case BranchMode::attention_only: branch_sum = f_attn; break;
        case BranchMode::conv_only: branch_sum = f_conv; break;
    }

    auto post = linear_fwd(ctx, ctx.gather(branch_sum, to_tok), bp.post_sum);
    Value y1 = ctx.add(x, ctx.gather(post, to_map));

    auto t2 = ctx.layer_norm_rows(ctx.gather(y1, to_tok), ctx.use(bp.ln2.gamma),
                                  ctx.use(bp.ln2.beta), T(1e-5));
    auto f = linear_fwd(ctx, ctx.act(linear_fwd(ctx, t2, bp.ffn1), Act::relu), bp.ffn2);
    return ctx.add(y1, ctx.gather(f, to_map));
}

}  // namespace detail

// img [3,H,W] -> features [shallow_channels,H,W].
template <class Ctx, typename T>
typename Ctx::Value backbone_forward(Ctx& ctx, const BackboneParams<T>& params,
                                     const BackboneConfig& cfg, typename Ctx::Value img,
                                     std::int64_t h, std::int64_t w,
                                     BranchProbe<T>* probe = nullptr) {
    auto fs = detail::conv_reflect(ctx, img, params.shallow, 3, h, w);
    auto x = fs;
    for (std::size_t s = 0; s < params.stages.size(); ++s) {
        const std::int64_t c = cfg.channels[s];
        const auto& stage = params.stages[s];
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            const bool want = probe && probe->stage == static_cast<std::int64_t>(s) &&
                              probe->block == static_cast<std::int64_t>(b);
            x = detail::block_forward(ctx, stage.blocks[b], cfg, x, c, h, w, want, probe);
        }
        x = detail::conv_reflect(ctx, x, stage.trans, c, h, w);
    }
    if (cfg.global_residual) x = ctx.add(x, fs);
    return x;
}

// Eager convenience wrapper.
template <typename T>
Tensor<T> extract_features(const Tensor<T>& img, const BackboneParams<T>& params,
                           const BackboneConfig& cfg, BranchProbe<T>* probe = nullptr) {
    if (img.rank() != 3 || img.dim(0) != 3) throw shape_error("extract_features: expected [3,H,W]");
    EagerCtx<T> ctx;
    return backbone_forward(ctx, params, cfg, ctx.use(img), img.dim(1), img.dim(2), probe);
}

}  // namespace itsrn
