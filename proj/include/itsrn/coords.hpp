#pragma once

// Continuous coordinate plumbing for the upsampler: cell-center grids in
// [-1,1], nearest-cell query projection with cell-normalized offsets, scale
// bias, and the 4-neighbor bilinear ensemble stencil. Geometry is always
// computed in double.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "itsrn/tensor.hpp"

namespace itsrn::coords {

// HR cell extents in normalized [-1,1] units; the scale bias S.
struct CellSize {
    double s_h = 0.0;
    double s_w = 0.0;
};

inline double center_coord(std::int64_t i, std::int64_t n) {
    return -1.0 + (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
}

// coords[i] = -1 + (2i+1)/n
inline Tensor<double> center_coords(std::int64_t n) {
    if (n < 1) throw contract_error("center_coords: n must be >= 1");
    Tensor<double> c({n});
    for (std::int64_t i = 0; i < n; ++i) c[i] = center_coord(i, n);
    return c;
}

inline std::pair<std::int64_t, std::int64_t> output_shape(std::int64_t h_lr, std::int64_t w_lr,
                                                          double r) {
    if (r < 1.0) throw contract_error("output_shape: scale must be >= 1 (upsampling only)");
    return {static_cast<std::int64_t>(std::floor(r * static_cast<double>(h_lr))),
            static_cast<std::int64_t>(std::floor(r * static_cast<double>(w_lr)))};
}

// Per-query axis geometry: nearest LR cell plus the two bilinear corners.
// Offsets are cell-normalized (one LR half-cell == 1). Corner indices are
// clamped at the borders; a collapsed corner pair carries the merged weight.
struct PointPlan {
    std::int32_t nn = 0;
    double off_nn = 0.0;
    std::int32_t lo = 0, hi = 0;
    double w_lo = 1.0, w_hi = 0.0;
    double off_lo = 0.0, off_hi = 0.0;
};

inline PointPlan plan_from_index_coord(std::int64_t n_lr, double u) {
    PointPlan p;
    // Nearest center, ties toward the smaller index.
    std::int64_t nn = static_cast<std::int64_t>(std::ceil(u - 0.5));
    nn = std::clamp<std::int64_t>(nn, 0, n_lr - 1);
    p.nn = static_cast<std::int32_t>(nn);
    p.off_nn = 2.0 * (u - static_cast<double>(nn));

    std::int64_t lo = static_cast<std::int64_t>(std::floor(u));
    const double f = u - static_cast<double>(lo);
    std::int64_t hi = lo + 1;
    lo = std::clamp<std::int64_t>(lo, 0, n_lr - 1);
    hi = std::clamp<std::int64_t>(hi, 0, n_lr - 1);
    p.lo = static_cast<std::int32_t>(lo);
    p.hi = static_cast<std::int32_t>(hi);
    if (lo == hi) {
        p.w_lo = 1.0;
        p.w_hi = 0.0;
    } else {
        p.w_lo = 1.0 - f;
        p.w_hi = f;
    }
    p.off_lo = 2.0 * (u - static_cast<double>(lo));
    p.off_hi = 2.0 * (u - static_cast<double>(hi));
    return p;
}

// Plan for an arbitrary continuous coordinate in [-1,1]. LR center i sits at
// index-coordinate u = i.
inline PointPlan point_plan(std::int64_t n_lr, double coord) {
    return plan_from_index_coord(n_lr, (coord + 1.0) * static_cast<double>(n_lr) / 2.0 - 0.5);
}

// Plan for HR grid cell i of n_hr. The index coordinate is formed from the
// exact integer numerator ((2i+1)*n_lr - n_hr) / (2*n_hr), so coinciding
// centers (e.g. scale 1) give offsets that are exactly zero.
inline PointPlan grid_point_plan(std::int64_t n_lr, std::int64_t i, std::int64_t n_hr) {
    const double u = static_cast<double>((2 * i + 1) * n_lr - n_hr) / static_cast<double>(2 * n_hr);
    return plan_from_index_coord(n_lr, u);
}

// grid_point_plan evaluated on the full HR cell-center grid of one axis.
inline std::vector<PointPlan> axis_plan(std::int64_t n_lr, std::int64_t n_hr) {
    std::vector<PointPlan> plan(static_cast<std::size_t>(n_hr));
    for (std::int64_t i = 0; i < n_hr; ++i)
        plan[static_cast<std::size_t>(i)] = grid_point_plan(n_lr, i, n_hr);
    return plan;
}

// Relative offsets to the nearest LR cell per HR query (dy, dx order).
struct OffsetField {
    Tensor<double> offsets;          // [H_hr, W_hr, 2]
    std::vector<std::int32_t> nn_row;  // H_hr * W_hr
    std::vector<std::int32_t> nn_col;
    CellSize cell;
    std::int64_t h_lr = 0, w_lr = 0, h_hr = 0, w_hr = 0;
};

inline void check_grid_pair(std::int64_t h_lr, std::int64_t w_lr, std::int64_t h_hr,
                            std::int64_t w_hr) {
    if (h_lr < 1 || w_lr < 1) throw contract_error("coords: LR extents must be >= 1");
    if (h_hr < h_lr || w_hr < w_lr) throw contract_error("coords: HR extents must be >= LR extents");
}

inline OffsetField project_queries(std::int64_t h_lr, std::int64_t w_lr, std::int64_t h_hr,
                                   std::int64_t w_hr) {
    check_grid_pair(h_lr, w_lr, h_hr, w_hr);
    OffsetField f;
    f.h_lr = h_lr;
    f.w_lr = w_lr;
    f.h_hr = h_hr;
    f.w_hr = w_hr;
    f.cell = CellSize{2.0 / static_cast<double>(h_hr), 2.0 / static_cast<double>(w_hr)};
    f.offsets = Tensor<double>({h_hr, w_hr, 2});
    f.nn_row.resize(static_cast<std::size_t>(h_hr * w_hr));
    f.nn_col.resize(static_cast<std::size_t>(h_hr * w_hr));
    const auto rows = axis_plan(h_lr, h_hr);
    const auto cols = axis_plan(w_lr, w_hr);
    for (std::int64_t y = 0; y < h_hr; ++y) {
        const auto& pr = rows[static_cast<std::size_t>(y)];
        for (std::int64_t x = 0; x < w_hr; ++x) {
            const auto& pc = cols[static_cast<std::size_t>(x)];
            f.offsets[(y * w_hr + x) * 2 + 0] = pr.off_nn;
            f.offsets[(y * w_hr + x) * 2 + 1] = pc.off_nn;
            f.nn_row[static_cast<std::size_t>(y * w_hr + x)] = pr.nn;
            f.nn_col[static_cast<std::size_t>(y * w_hr + x)] = pc.nn;
        }
    }
    return f;
}

// Bilinear blend weights over the 4 surrounding LR centers per HR query.
// Corner order: 00=(lo,lo), 01=(lo,hi), 10=(hi,lo), 11=(hi,hi).
struct EnsembleWeights {
    Tensor<double> w[4];               // each [H_hr, W_hr]
    std::vector<std::int32_t> row[4];  // H_hr * W_hr
    std::vector<std::int32_t> col[4];
};

inline EnsembleWeights ensemble_weights(std::int64_t h_lr, std::int64_t w_lr, std::int64_t h_hr,
                                        std::int64_t w_hr) {
    check_grid_pair(h_lr, w_lr, h_hr, w_hr);
    EnsembleWeights e;
    const std::size_t n = static_cast<std::size_t>(h_hr * w_hr);
    for (int k = 0; k < 4; ++k) {
        e.w[k] = Tensor<double>({h_hr, w_hr});
        e.row[k].resize(n);
        e.col[k].resize(n);
    }
    const auto rows = axis_plan(h_lr, h_hr);
    const auto cols = axis_plan(w_lr, w_hr);
    for (std::int64_t y = 0; y < h_hr; ++y) {
        const auto& pr = rows[static_cast<std::size_t>(y)];
        for (std::int64_t x = 0; x < w_hr; ++x) {
            const auto& pc = cols[static_cast<std::size_t>(x)];
            const std::size_t q = static_cast<std::size_t>(y * w_hr + x);
            const std::int32_t ri[2] = {pr.lo, pr.hi};
            const std::int32_t ci[2] = {pc.lo, pc.hi};
            const double rw[2] = {pr.w_lo, pr.w_hi};
            const double cw[2] = {pc.w_lo, pc.w_hi};
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    const int k = a * 2 + b;
                    e.row[k][q] = ri[a];
                    e.col[k][q] = ci[b];
                    e.w[k][static_cast<std::int64_t>(q)] = rw[a] * cw[b];
                }
        }
    }
    return e;
}

}  // namespace itsrn::coords
