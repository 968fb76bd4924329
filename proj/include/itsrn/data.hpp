#pragma once

// Image I/O (binary PPM P6), a synthetic screen-content generator, bicubic
// LR/HR pair synthesis, and the multi-scale training batch sampler.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "itsrn/coords.hpp"
#include "itsrn/kernels.hpp"

namespace itsrn::data {

template <typename T>
using Image = Tensor<T>;  // [3, H, W], values in [0,1]

// --- PPM P6 ---

namespace detail {

inline int next_header_token(std::istream& in, std::string& tok) {
    tok.clear();
    int ch = in.get();
    // Skip whitespace and '#' comments.
    while (ch != EOF && (std::isspace(ch) || ch == '#')) {
        if (ch == '#')
            while (ch != EOF && ch != '\n') ch = in.get();
        ch = in.get();
    }
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    return tok.empty() ? EOF : 0;
}

}  // namespace detail

template <typename T>
Image<T> load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("ppm: cannot open: " + path);
    std::string tok;
    if (detail::next_header_token(in, tok) == EOF || tok != "P6")
        throw format_error("ppm: bad magic (expected P6) in " + path);
    std::int64_t w = 0, h = 0, maxval = 0;
    for (std::int64_t* field : {&w, &h, &maxval}) {
        if (detail::next_header_token(in, tok) == EOF)
            throw format_error("ppm: truncated header in " + path);
        try {
            *field = std::stoll(tok);
        } catch (...) {
            throw format_error("ppm: malformed header field \"" + tok + "\" in " + path);
        }
    }
    if (maxval != 255) throw format_error("ppm: unsupported maxval " + std::to_string(maxval) +
                                          " (only 255) in " + path);
    if (w < 1 || h < 1) throw format_error("ppm: non-positive extents in " + path);
    std::vector<unsigned char> raw(static_cast<std::size_t>(3 * w * h));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw format_error("ppm: truncated payload in " + path);
    Image<T> img({3, h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img[(c * h + y) * w + x] =
                    static_cast<T>(raw[static_cast<std::size_t>((y * w + x) * 3 + c)]) / T{255};
    return img;
}

// Clamps to [0,1] and rounds half up to 8 bits.
template <typename T>
void save_ppm(const Image<T>& img, const std::string& path) {
    if (img.rank() != 3 || img.dim(0) != 3) throw shape_error("ppm: expected [3,H,W]");
    const std::int64_t h = img.dim(1), w = img.dim(2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("ppm: cannot open for writing: " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(3 * w * h));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(static_cast<double>(img[(c * h + y) * w + x]), 0.0, 1.0);
                raw[static_cast<std::size_t>((y * w + x) * 3 + c)] =
                    static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw format_error("ppm: write failed: " + path);
}

// --- synthetic screen content ---

namespace detail {

template <typename T>
void fill_rect(Image<T>& img, std::int64_t y0, std::int64_t x0, std::int64_t y1, std::int64_t x1,
               double r, double g, double b) {
    const std::int64_t h = img.dim(1), w = img.dim(2);
    y0 = std::clamp<std::int64_t>(y0, 0, h);
    y1 = std::clamp<std::int64_t>(y1, 0, h);
    x0 = std::clamp<std::int64_t>(x0, 0, w);
    x1 = std::clamp<std::int64_t>(x1, 0, w);
    const double rgb[3] = {r, g, b};
    for (int c = 0; c < 3; ++c)
        for (std::int64_t y = y0; y < y1; ++y)
            for (std::int64_t x = x0; x < x1; ++x)
                img[(c * h + y) * w + x] = static_cast<T>(rgb[c]);
}

inline double snap_u8(double v) { return std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5) / 255.0; }

}  // namespace detail

// Deterministic per seed. Composites a flat background, axis-aligned
// rectangles, 1-px rules, bitmap glyph-like blocks, and one smooth gradient
// region. Always draws at least one black 1-px rule on a white strip, so a
// full-contrast single-pixel edge is guaranteed. Values sit on the u8 grid.
template <typename T>
Image<T> synth_sci(std::uint64_t seed, std::int64_t h, std::int64_t w) {
    if (h < 16 || w < 16) throw contract_error("synth_sci: extents must be >= 16");
    Rng rng(seed);
    Image<T> img({3, h, w});

    const double bg = detail::snap_u8(0.75 + 0.25 * rng.uniform());
    detail::fill_rect(img, 0, 0, h, w, bg, bg, bg);

    // Rectangles (window/panel-like blocks).
    const int n_rect = 3 + static_cast<int>(rng.below(4));
    for (int i = 0; i < n_rect; ++i) {
        const std::int64_t y0 = rng.below(h - 4), x0 = rng.below(w - 4);
        const std::int64_t rh = 3 + rng.below(h / 2), rw = 3 + rng.below(w / 2);
        detail::fill_rect(img, y0, x0, y0 + rh, x0 + rw, detail::snap_u8(rng.uniform()),
                          detail::snap_u8(rng.uniform()), detail::snap_u8(rng.uniform()));
    }

    // Smooth gradient region (natural-image-like statistics).
    {
        const std::int64_t y0 = rng.below(h / 2), x0 = rng.below(w / 2);
        const std::int64_t gh = h / 3, gw = w / 3;
        const double c0 = rng.uniform(), c1 = rng.uniform();
        for (int c = 0; c < 3; ++c)
            for (std::int64_t y = y0; y < std::min(h, y0 + gh); ++y)
                for (std::int64_t x = x0; x < std::min(w, x0 + gw); ++x) {
                    const double t = static_cast<double>(x - x0) / static_cast<double>(gw);
                    img[(c * h + y) * w + x] = static_cast<T>(detail::snap_u8(c0 + (c1 - c0) * t));
                }
    }

    // Glyph-like 5x7 bitmap blocks.
    const int n_glyph = 4 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n_glyph; ++i) {
        const std::int64_t y0 = rng.below(std::max<std::int64_t>(1, h - 8));
        const std::int64_t x0 = rng.below(std::max<std::int64_t>(1, w - 6));
        const double ink = detail::snap_u8(rng.uniform() * 0.25);
        for (std::int64_t gy = 0; gy < 7 && y0 + gy < h; ++gy)
            for (std::int64_t gx = 0; gx < 5 && x0 + gx < w; ++gx)
                if (rng.uniform() < 0.5)
                    detail::fill_rect(img, y0 + gy, x0 + gx, y0 + gy + 1, x0 + gx + 1, ink, ink, ink);
    }

    // Thin rules, then the guaranteed full-contrast one: a white strip with
    // a single black 1-px vertical line inside it.
    const int n_rules = 2 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n_rules; ++i) {
        const double ink = detail::snap_u8(rng.uniform() * 0.5);
        if (rng.uniform() < 0.5) {
            const std::int64_t y = rng.below(h);
            detail::fill_rect(img, y, 0, y + 1, w, ink, ink, ink);
        } else {
            const std::int64_t x = rng.below(w);
            detail::fill_rect(img, 0, x, h, x + 1, ink, ink, ink);
        }
    }
    {
        const std::int64_t y0 = 2 + rng.below(h - 10);
        const std::int64_t x0 = 2 + rng.below(w - 10);
        detail::fill_rect(img, y0, x0, y0 + 5, x0 + 7, 1.0, 1.0, 1.0);
        detail::fill_rect(img, y0, x0 + 3, y0 + 5, x0 + 4, 0.0, 0.0, 0.0);
    }
    return img;
}

// --- pair synthesis ---

template <typename T>
struct Pair {
    Image<T> lr, hr;
};

// LR dims are floor(H/r) x floor(W/r); the HR side is center-cropped to
// floor(r*h_lr) x floor(r*w_lr) so output_shape(lr, r) matches it exactly.
template <typename T>
Pair<T> make_pair(const Image<T>& hr, double r) {
    if (r < 1.0) throw contract_error("make_pair: scale must be >= 1");
    const std::int64_t h = hr.dim(1), w = hr.dim(2);
    const std::int64_t h_lr = static_cast<std::int64_t>(std::floor(static_cast<double>(h) / r));
    const std::int64_t w_lr = static_cast<std::int64_t>(std::floor(static_cast<double>(w) / r));
    if (h_lr < 8 || w_lr < 8)
        throw contract_error("make_pair: LR side would drop below 8 pixels");
    const auto [th, tw] = coords::output_shape(h_lr, w_lr, r);
    const std::int64_t oy = (h - th) / 2, ox = (w - tw) / 2;
    Image<T> cropped({3, th, tw});
    for (int c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < th; ++y)
            for (std::int64_t x = 0; x < tw; ++x)
                cropped[(c * th + y) * tw + x] = hr[(c * h + y + oy) * w + x + ox];
    Pair<T> out;
    out.lr = bicubic_resize(cropped, h_lr, w_lr);
    out.hr = std::move(cropped);
    return out;
}

// --- multi-scale training batches ---

template <typename T>
struct TrainBatch {
    std::vector<Image<T>> lr_patches;  // b images, all [3,h,w]
    std::vector<double> scales;        // per-sample r
    // Per sample: h*w ground-truth pixels with their continuous coordinates
    // (crop-relative, in [-1,1]) and the crop's cell size.
    std::vector<Tensor<T>> gt_pixels;  // [h*w, 3]
    std::vector<std::vector<std::pair<double, double>>> gt_coords;
    std::vector<coords::CellSize> cells;
};

template <typename T>
Image<T> dihedral(const Image<T>& img, bool hflip, bool vflip, bool transpose) {
    const std::int64_t h = img.dim(1), w = img.dim(2);
    const std::int64_t oh = transpose ? w : h, ow = transpose ? h : w;
    Image<T> out({3, oh, ow});
    for (int c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const std::int64_t sy = vflip ? h - 1 - y : y;
                const std::int64_t sx = hflip ? w - 1 - x : x;
                if (transpose)
                    out[(c * oh + x) * ow + y] = img[(c * h + sy) * w + sx];
                else
                    out[(c * oh + y) * ow + x] = img[(c * h + sy) * w + sx];
            }
    return out;
}

// Per sample: draw r ~ U(r_range), crop a floor(r*h) x floor(r*w) HR patch
// at a random position (with optional flip/rotation augmentation), bicubic-
// downsample it to h x w, and sample h*w distinct GT pixels.
template <typename T>
TrainBatch<T> make_batch(const std::vector<Image<T>>& pool, std::int64_t b, std::int64_t h,
                         std::int64_t w, double r_min, double r_max, Rng& rng,
                         double augment_prob = 0.5) {
    if (pool.empty()) throw contract_error("make_batch: empty image pool");
    TrainBatch<T> batch;
    for (std::int64_t s = 0; s < b; ++s) {
        const double r = rng.uniform(r_min, r_max);
        const std::int64_t ch = static_cast<std::int64_t>(std::floor(r * static_cast<double>(h)));
        const std::int64_t cw = static_cast<std::int64_t>(std::floor(r * static_cast<double>(w)));
        const Image<T>& src = pool[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(pool.size())))];
        if (src.dim(1) < ch || src.dim(2) < cw)
            throw contract_error("make_batch: pool image too small for the requested crop");
        const std::int64_t y0 = rng.below(src.dim(1) - ch + 1);
        const std::int64_t x0 = rng.below(src.dim(2) - cw + 1);
        Image<T> crop({3, ch, cw});
        for (int c = 0; c < 3; ++c)
            for (std::int64_t y = 0; y < ch; ++y)
                for (std::int64_t x = 0; x < cw; ++x)
                    crop[(c * ch + y) * cw + x] = src[(c * src.dim(1) + y0 + y) * src.dim(2) + x0 + x];

        if (augment_prob > 0.0) {
            const bool hf = rng.uniform() < augment_prob;
            const bool vf = rng.uniform() < augment_prob;
            const bool tr = (ch == cw) && rng.uniform() < augment_prob;
            if (hf || vf || tr) crop = dihedral(crop, hf, vf, tr);
        }

        batch.lr_patches.push_back(bicubic_resize(crop, h, w));
        batch.scales.push_back(r);
        batch.cells.push_back(coords::CellSize{2.0 / static_cast<double>(ch),
                                               2.0 / static_cast<double>(cw)});

        // h*w distinct pixel indices out of the crop (partial Fisher-Yates).
        const std::int64_t total = ch * cw, want = h * w;
        std::vector<std::int64_t> ids(static_cast<std::size_t>(total));
        for (std::int64_t i = 0; i < total; ++i) ids[static_cast<std::size_t>(i)] = i;
        for (std::int64_t i = 0; i < want; ++i) {
            const std::int64_t j = i + rng.below(total - i);
            std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
        }

        Tensor<T> gt({want, 3});
        std::vector<std::pair<double, double>> qc(static_cast<std::size_t>(want));
        for (std::int64_t i = 0; i < want; ++i) {
            const std::int64_t pix = ids[static_cast<std::size_t>(i)];
            const std::int64_t py = pix / cw, px = pix % cw;
            for (int c = 0; c < 3; ++c) gt.at2(i, c) = crop[(c * ch + py) * cw + px];
            qc[static_cast<std::size_t>(i)] = {coords::center_coord(py, ch),
                                               coords::center_coord(px, cw)};
        }
        batch.gt_pixels.push_back(std::move(gt));
        batch.gt_coords.push_back(std::move(qc));
    }
    return batch;
}

// --- dataset directory ---

// Flat folder of .ppm files; an optional newline-delimited manifest picks a
// subset.
template <typename T>
std::vector<Image<T>> load_pool(const std::string& dir, const std::string& manifest = "") {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw format_error("dataset: not a directory: " + dir);
    std::vector<std::string> names;
    if (!manifest.empty()) {
        std::ifstream in(manifest);
        if (!in) throw format_error("dataset: cannot open manifest: " + manifest);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) names.push_back(line);
    } else {
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".ppm")
                names.push_back(entry.path().filename().string());
        std::sort(names.begin(), names.end());
    }
    if (names.empty()) throw format_error("dataset: no .ppm files under " + dir);
    std::vector<Image<T>> pool;
    pool.reserve(names.size());
    for (const auto& n : names) pool.push_back(load_ppm<T>((fs::path(dir) / n).string()));
    return pool;
}

}  // namespace itsrn::data
