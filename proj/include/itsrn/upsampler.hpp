#pragma once

// Implicit transformer upsampler. Continuous HR queries are answered from LR
// feature tokens: Q is a linear map of the query's cell-normalized offset,
// K/V are linear maps of the feature at the neighboring LR cell, and the
// value is modulated as sigma(K*Q + Linear(S)) * V before a 4-layer MLP
// renders RGB. Per-query predictions from the 4 surrounding LR cells are
// blended with bilinear weights (local ensemble). Three ablation variants
// share the machinery: LIIF-style concatenation, bilinear value blending,
// and an offset-MLP reweighting.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "itsrn/coords.hpp"
#include "itsrn/ctx.hpp"
#include "itsrn/params.hpp"

namespace itsrn {

enum class Reweight { sin, tanh, sigmoid, softmax };
enum class UpsamplerVariant { modulation, liif_concat, bilinear_only, itsrn_offset };

inline const char* reweight_name(Reweight r) {
    switch (r) {
        case Reweight::sin: return "sin";
        case Reweight::tanh: return "tanh";
        case Reweight::sigmoid: return "sigmoid";
        case Reweight::softmax: return "softmax";
    }
    return "?";
}

inline Reweight parse_reweight(const std::string& s) {
    if (s == "sin") return Reweight::sin;
    if (s == "tanh") return Reweight::tanh;
    if (s == "sigmoid") return Reweight::sigmoid;
    if (s == "softmax") return Reweight::softmax;
    throw format_error("unknown reweight function: " + s);
}

inline const char* variant_name(UpsamplerVariant v) {
    switch (v) {
        case UpsamplerVariant::modulation: return "modulation";
        case UpsamplerVariant::liif_concat: return "liif_concat";
        case UpsamplerVariant::bilinear_only: return "bilinear_only";
        case UpsamplerVariant::itsrn_offset: return "itsrn_offset";
    }
    return "?";
}

inline UpsamplerVariant parse_variant(const std::string& s) {
    if (s == "modulation") return UpsamplerVariant::modulation;
    if (s == "liif_concat") return UpsamplerVariant::liif_concat;
    if (s == "bilinear_only") return UpsamplerVariant::bilinear_only;
    if (s == "itsrn_offset") return UpsamplerVariant::itsrn_offset;
    throw format_error("unknown upsampler variant: " + s);
}

template <typename T>
struct UpsamplerParams {
    UpsamplerVariant variant = UpsamplerVariant::modulation;
    Reweight reweight = Reweight::sin;
    std::int64_t c_feat = 0, c_up = 0, phi_hidden = 0;

    LinearParams<T> w_q;  // 2 -> c_up
    LinearParams<T> w_k;  // c_feat -> c_up (modulation)
    LinearParams<T> w_v;  // c_feat -> c_up
    LinearParams<T> w_s;  // 2 -> c_up (modulation)
    LinearParams<T> h1, h2;  // 2 -> c_up -> c_up (itsrn_offset)
    std::array<LinearParams<T>, 4> phi;

    void init(std::int64_t feat, std::int64_t up, std::int64_t hidden, UpsamplerVariant var,
              Reweight rw, Rng& rng) {
        variant = var;
        reweight = rw;
        c_feat = feat;
        c_up = up;
        phi_hidden = hidden;
        w_v.init_fan_in(feat, up, rng);
        std::int64_t phi_in = up;
        switch (var) {
            case UpsamplerVariant::modulation:
                w_q.init_fan_in(2, up, rng);
                w_k.init_fan_in(feat, up, rng);
                w_s.init_fan_in(2, up, rng);
                break;
            case UpsamplerVariant::liif_concat:
                w_q.init_fan_in(2, up, rng);
                phi_in = up + 9 * up;  // query channels + 3x3-unfolded value
                break;
            case UpsamplerVariant::bilinear_only:
                break;
            case UpsamplerVariant::itsrn_offset:
                h1.init_fan_in(2, up, rng);
                h2.init_fan_in(up, up, rng);
                break;
        }
        phi[0].init_fan_in(phi_in, hidden, rng);
        phi[1].init_fan_in(hidden, hidden, rng);
        phi[2].init_fan_in(hidden, hidden, rng);
        phi[3].init_fan_in(hidden, 3, rng);
    }

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        auto maybe = [&](const std::string& name, LinearParams<T>& lp) {
            if (!lp.w.empty()) lp.visit(name, v);
        };
        maybe(prefix + ".w_q", w_q);
        maybe(prefix + ".w_k", w_k);
        maybe(prefix + ".w_v", w_v);
        maybe(prefix + ".w_s", w_s);
        maybe(prefix + ".h1", h1);
        maybe(prefix + ".h2", h2);
        for (std::size_t i = 0; i < phi.size(); ++i)
            phi[i].visit(prefix + ".phi" + std::to_string(i), v);
    }
};

// A batch of continuous HR queries resolved to concrete LR geometry: for
// each of the 4 ensemble corners, the flat LR token index, the (dy, dx)
// offset feeding Q, and the bilinear blend weight.
template <typename T>
struct QuerySet {
    std::int64_t n = 0;
    std::array<std::vector<std::int64_t>, 4> idx;
    std::array<Tensor<T>, 4> offs;  // each [n, 2]
    std::array<std::vector<T>, 4> wgt;
    Tensor<T> scale_bias;  // [1, 2] = (2/h_hr, 2/w_hr)
};

namespace detail {

template <typename T>
void fill_query(QuerySet<T>& qs, std::int64_t q, std::int64_t w_lr, const coords::PointPlan& py,
                const coords::PointPlan& px) {
    const std::int32_t ri[2] = {py.lo, py.hi};
    const std::int32_t ci[2] = {px.lo, px.hi};
    const double rw[2] = {py.w_lo, py.w_hi};
    const double cw[2] = {px.w_lo, px.w_hi};
    const double ro[2] = {py.off_lo, py.off_hi};
    const double co[2] = {px.off_lo, px.off_hi};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const int k = a * 2 + b;
            qs.idx[k][static_cast<std::size_t>(q)] = static_cast<std::int64_t>(ri[a]) * w_lr + ci[b];
            qs.offs[k][q * 2 + 0] = static_cast<T>(ro[a]);
            qs.offs[k][q * 2 + 1] = static_cast<T>(co[b]);
            qs.wgt[k][static_cast<std::size_t>(q)] = static_cast<T>(rw[a] * cw[b]);
        }
}

}  // namespace detail

// Queries for HR grid rows [row_begin, row_end) of an (h_hr x w_hr) output.
template <typename T>
QuerySet<T> grid_queries(std::int64_t h_lr, std::int64_t w_lr, std::int64_t h_hr, std::int64_t w_hr,
                         std::int64_t row_begin, std::int64_t row_end) {
    const auto rows = coords::axis_plan(h_lr, h_hr);
    const auto cols = coords::axis_plan(w_lr, w_hr);
    QuerySet<T> qs;
    qs.n = (row_end - row_begin) * w_hr;
    for (int k = 0; k < 4; ++k) {
        qs.idx[k].resize(static_cast<std::size_t>(qs.n));
        qs.offs[k] = Tensor<T>({qs.n, 2});
        qs.wgt[k].resize(static_cast<std::size_t>(qs.n));
    }
    qs.scale_bias = Tensor<T>({1, 2});
    qs.scale_bias[0] = static_cast<T>(2.0 / static_cast<double>(h_hr));
    qs.scale_bias[1] = static_cast<T>(2.0 / static_cast<double>(w_hr));
    std::int64_t q = 0;
    for (std::int64_t y = row_begin; y < row_end; ++y)
        for (std::int64_t x = 0; x < w_hr; ++x, ++q)
            detail::fill_query(qs, q, w_lr, rows[static_cast<std::size_t>(y)],
                               cols[static_cast<std::size_t>(x)]);
    return qs;
}

// Queries at arbitrary continuous (y, x) coordinates in [-1,1] with an
// explicit cell size (the multi-scale training path).
template <typename T>
QuerySet<T> point_queries(std::int64_t h_lr, std::int64_t w_lr,
                          const std::vector<std::pair<double, double>>& yx, double cell_h,
                          double cell_w) {
    QuerySet<T> qs;
    qs.n = static_cast<std::int64_t>(yx.size());
    for (int k = 0; k < 4; ++k) {
        qs.idx[k].resize(static_cast<std::size_t>(qs.n));
        qs.offs[k] = Tensor<T>({qs.n, 2});
        qs.wgt[k].resize(static_cast<std::size_t>(qs.n));
    }
    qs.scale_bias = Tensor<T>({1, 2});
    qs.scale_bias[0] = static_cast<T>(cell_h);
    qs.scale_bias[1] = static_cast<T>(cell_w);
    for (std::int64_t q = 0; q < qs.n; ++q) {
        const auto& [cy, cx] = yx[static_cast<std::size_t>(q)];
        detail::fill_query(qs, q, w_lr, coords::point_plan(h_lr, cy), coords::point_plan(w_lr, cx));
    }
    return qs;
}

inline IndexMap chw_to_tokens_map(std::int64_t c, std::int64_t h, std::int64_t w) {
    IndexMap m;
    m.out_shape = {h * w, c};
    m.src.resize(static_cast<std::size_t>(h * w * c));
    for (std::int64_t p = 0; p < h * w; ++p)
        for (std::int64_t ch = 0; ch < c; ++ch)
            m.src[static_cast<std::size_t>(p * c + ch)] = ch * h * w + p;
    return m;
}

inline IndexMap tokens_to_chw_map(std::int64_t c, std::int64_t h, std::int64_t w) {
    IndexMap m;
    m.out_shape = {c, h, w};
    m.src.resize(static_cast<std::size_t>(h * w * c));
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t p = 0; p < h * w; ++p)
            m.src[static_cast<std::size_t>(ch * h * w + p)] = p * c + ch;
    return m;
}

// Row gather on a [N, C] token matrix.
inline IndexMap row_gather_map(const std::vector<std::int64_t>& rows, std::int64_t c) {
    IndexMap m;
    const std::int64_t n = static_cast<std::int64_t>(rows.size());
    m.out_shape = {n, c};
    m.src.resize(static_cast<std::size_t>(n * c));
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch)
            m.src[static_cast<std::size_t>(i * c + ch)] = rows[static_cast<std::size_t>(i)] * c + ch;
    return m;
}

// 3x3 neighborhood unfolding on a token grid (zero beyond the border):
// out[(y,x), j*C + ch] = tok[(y+dy, x+dx), ch].
inline IndexMap unfold3x3_map(std::int64_t h, std::int64_t w, std::int64_t c) {
    IndexMap m;
    m.out_shape = {h * w, 9 * c};
    m.src.resize(static_cast<std::size_t>(h * w * 9 * c));
    std::size_t at = 0;
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dx = -1; dx <= 1; ++dx)
                    for (std::int64_t ch = 0; ch < c; ++ch, ++at) {
                        const std::int64_t yy = y + dy, xx = x + dx;
                        m.src[at] = (yy < 0 || yy >= h || xx < 0 || xx >= w)
                                        ? -1
                                        : (yy * w + xx) * c + ch;
                    }
    return m;
}

template <class Ctx, typename T>
typename Ctx::Value linear_fwd(Ctx& ctx, typename Ctx::Value x, const LinearParams<T>& p) {
    return ctx.add_rows(ctx.matmul(x, ctx.use(p.w)), ctx.use(p.b));
}

template <class Ctx, typename T>
typename Ctx::Value render_fwd(Ctx& ctx, const UpsamplerParams<T>& p, typename Ctx::Value x) {
    for (std::size_t i = 0; i < p.phi.size(); ++i) {
        x = linear_fwd(ctx, x, p.phi[i]);
        if (i + 1 < p.phi.size()) x = ctx.act(x, Act::relu);
    }
    return x;
}

template <class Ctx>
typename Ctx::Value apply_reweight(Ctx& ctx, typename Ctx::Value x, Reweight rw) {
    switch (rw) {
        case Reweight::sin: return ctx.act(x, Act::sin);
        case Reweight::tanh: return ctx.act(x, Act::tanh);
        case Reweight::sigmoid: return ctx.act(x, Act::sigmoid);
        case Reweight::softmax: return ctx.softmax_rows(x);  // over the channel axis
    }
    throw contract_error("unknown reweight function");
}

// Per-image projections of the feature map, hoisted out of the query loop.
template <class Ctx>
struct PreparedFeatures {
    typename Ctx::Value k_tok;     // [N_lr, c_up]
    typename Ctx::Value v_tok;     // [N_lr, c_up]
    typename Ctx::Value v_unfold;  // [N_lr, 9*c_up] (liif_concat)
    bool has_k = false, has_unfold = false;
};

template <class Ctx, typename T>
PreparedFeatures<Ctx> prepare_features(Ctx& ctx, const UpsamplerParams<T>& p,
                                       typename Ctx::Value feats_map, std::int64_t h_lr,
                                       std::int64_t w_lr) {
    PreparedFeatures<Ctx> prep;
    auto tokens = ctx.gather(feats_map, chw_to_tokens_map(p.c_feat, h_lr, w_lr));
    prep.v_tok = linear_fwd(ctx, tokens, p.w_v);
    if (p.variant == UpsamplerVariant::modulation) {
        prep.k_tok = linear_fwd(ctx, tokens, p.w_k);
        prep.has_k = true;
    }
    if (p.variant == UpsamplerVariant::liif_concat) {
        prep.v_unfold = ctx.gather(prep.v_tok, unfold3x3_map(h_lr, w_lr, p.c_up));
        prep.has_unfold = true;
    }
    return prep;
}

// RGB rows [n, 3] for one query set. All variants share the output contract;
// bilinear_only blends values before the MLP, the others blend rendered
// predictions from the 4 ensemble corners.
template <class Ctx, typename T>
typename Ctx::Value upsample_queries(Ctx& ctx, const UpsamplerParams<T>& p,
                                     const PreparedFeatures<Ctx>& prep, const QuerySet<T>& qs) {
    using Value = typename Ctx::Value;

    if (p.variant == UpsamplerVariant::bilinear_only) {
        Value blend{};
        for (int k = 0; k < 4; ++k) {
            Value v = ctx.gather(prep.v_tok, row_gather_map(qs.idx[k], p.c_up));
            v = ctx.scale_rows_const(v, qs.wgt[k]);
            blend = k == 0 ? v : ctx.add(blend, v);
        }
        return render_fwd(ctx, p, blend);
    }

    Value s_vec{};
    if (p.variant == UpsamplerVariant::modulation)
        s_vec = linear_fwd(ctx, ctx.constant(qs.scale_bias), p.w_s);

    Value acc{};
    for (int k = 0; k < 4; ++k) {
        Value off = ctx.constant(qs.offs[k]);
        Value v = ctx.gather(prep.v_tok, row_gather_map(qs.idx[k], p.c_up));
        Value rgb{};
        switch (p.variant) {
            case UpsamplerVariant::modulation: {
                Value q = linear_fwd(ctx, off, p.w_q);
                Value kk = ctx.gather(prep.k_tok, row_gather_map(qs.idx[k], p.c_up));
                Value pre = ctx.add_rows(ctx.mul(kk, q), s_vec);
                Value w = apply_reweight(ctx, pre, p.reweight);
                rgb = render_fwd(ctx, p, ctx.mul(w, v));
                break;
            }
            case UpsamplerVariant::liif_concat: {
                Value q = linear_fwd(ctx, off, p.w_q);
                Value vu = ctx.gather(prep.v_unfold, row_gather_map(qs.idx[k], 9 * p.c_up));
                rgb = render_fwd(ctx, p, ctx.concat_cols(q, vu));
                break;
            }
            case UpsamplerVariant::itsrn_offset: {
                Value hv = linear_fwd(ctx, ctx.act(linear_fwd(ctx, off, p.h1), Act::relu), p.h2);
                rgb = render_fwd(ctx, p, ctx.mul(hv, v));
                break;
            }
            case UpsamplerVariant::bilinear_only: break;  // handled above
        }
        rgb = ctx.scale_rows_const(rgb, qs.wgt[k]);
        acc = k == 0 ? rgb : ctx.add(acc, rgb);
    }
    return acc;
}

// Full-grid eager upsampling, chunked over HR rows so intermediates stay
// bounded for large outputs.
template <typename T>
Tensor<T> upsample(const Tensor<T>& feats, std::int64_t h_hr, std::int64_t w_hr,
                   const UpsamplerParams<T>& p) {
    const std::int64_t h_lr = feats.dim(1), w_lr = feats.dim(2);
    if (h_hr < h_lr || w_hr < w_lr)
        throw contract_error("upsample: output extents must not shrink the input grid");
    EagerCtx<T> ctx;
    auto prep = prepare_features(ctx, p, ctx.use(feats), h_lr, w_lr);

    Tensor<T> out({3, h_hr, w_hr});
    const std::int64_t rows_per_chunk = std::max<std::int64_t>(1, 8192 / w_hr);
    for (std::int64_t r0 = 0; r0 < h_hr; r0 += rows_per_chunk) {
        const std::int64_t r1 = std::min(h_hr, r0 + rows_per_chunk);
        auto qs = grid_queries<T>(h_lr, w_lr, h_hr, w_hr, r0, r1);
        Tensor<T> rgb = upsample_queries(ctx, p, prep, qs);
        for (std::int64_t q = 0; q < qs.n; ++q) {
            const std::int64_t y = r0 + q / w_hr, x = q % w_hr;
            for (int c = 0; c < 3; ++c) out[(c * h_hr + y) * w_hr + x] = rgb[q * 3 + c];
        }
    }
    return out;
}

// --- standalone single-neighbor surface (Eq. 3/4 as written) ---

template <typename T>
struct QKV {
    Tensor<T> q, k, v;  // each [n, c_up]
};

// Q from offsets, K/V gathered from the nearest LR cell of each query.
template <typename T>
QKV<T> project_qkv(const coords::OffsetField& field, const Tensor<T>& feats,
                   const UpsamplerParams<T>& p) {
    if (feats.dim(0) != p.c_feat || feats.dim(1) != field.h_lr || feats.dim(2) != field.w_lr)
        throw shape_error("project_qkv: feature map does not match the offset field");
    EagerCtx<T> ctx;
    const std::int64_t n = field.h_hr * field.w_hr;
    Tensor<T> offs({n, 2});
    std::vector<std::int64_t> rows(static_cast<std::size_t>(n));
    for (std::int64_t q = 0; q < n; ++q) {
        offs[q * 2 + 0] = static_cast<T>(field.offsets[q * 2 + 0]);
        offs[q * 2 + 1] = static_cast<T>(field.offsets[q * 2 + 1]);
        rows[static_cast<std::size_t>(q)] =
            static_cast<std::int64_t>(field.nn_row[static_cast<std::size_t>(q)]) * field.w_lr +
            field.nn_col[static_cast<std::size_t>(q)];
    }
    auto tokens = ctx.gather(feats, chw_to_tokens_map(p.c_feat, field.h_lr, field.w_lr));
    QKV<T> out;
    out.q = linear_fwd(ctx, offs, p.w_q);
    out.k = ctx.gather(linear_fwd(ctx, tokens, p.w_k), row_gather_map(rows, p.c_up));
    out.v = ctx.gather(linear_fwd(ctx, tokens, p.w_v), row_gather_map(rows, p.c_up));
    return out;
}

// V_p = sigma(K * Q + Linear(S)) * V
template <typename T>
Tensor<T> modulate(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                   coords::CellSize cell, const UpsamplerParams<T>& p) {
    if (!q.same_shape(k) || !q.same_shape(v)) throw shape_error("modulate: Q/K/V must align");
    EagerCtx<T> ctx;
    Tensor<T> s({1, 2});
    s[0] = static_cast<T>(cell.s_h);
    s[1] = static_cast<T>(cell.s_w);
    auto s_vec = linear_fwd(ctx, s, p.w_s);
    auto pre = ctx.add_rows(itsrn::mul(k, q), s_vec);
    return itsrn::mul(apply_reweight(ctx, pre, p.reweight), v);
}

// rgb = Phi(V_p)
template <typename T>
Tensor<T> render(const UpsamplerParams<T>& p, const Tensor<T>& v_p) {
    if (v_p.dim(v_p.rank() - 1) != p.phi[0].w.dim(0))
        throw shape_error("render: value width does not match the MLP input");
    EagerCtx<T> ctx;
    return render_fwd(ctx, p, v_p);
}

}  // namespace itsrn
