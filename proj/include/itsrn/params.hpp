#pragma once

// Parameter building blocks shared by the upsampler and backbone, plus the
// seeded initializers: truncated normal (std 0.02) for linear maps and bias
// tables, Kaiming-uniform for convolutions, zeros for biases, identity for
// layer norms. Every struct exposes visit(prefix, fn) so checkpointing, the
// optimizer and parameter counting walk one stable, named order.

#include <cmath>
#include <string>
#include <utility>

#include "itsrn/common.hpp"
#include "itsrn/tensor.hpp"

namespace itsrn {

template <typename T>
void fill_trunc_normal(Tensor<T>& t, Rng& rng, double std_dev = 0.02) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.trunc_normal(std_dev));
}

template <typename T>
void fill_kaiming_uniform(Tensor<T>& t, Rng& rng, std::int64_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
}

// y = x * w + b with w stored [in, out].
template <typename T>
struct LinearParams {
    Tensor<T> w, b;

    void init(std::int64_t in, std::int64_t out, Rng& rng) {
        w = Tensor<T>({in, out});
        b = Tensor<T>({out});
        fill_trunc_normal(w, rng);
    }

    // Fan-in-scaled init for maps whose output must carry unit-scale signal
    // from the first step (the multiplicative upsampler path; a 0.02-std
    // init there collapses the modulation gate toward sin(0)).
    void init_fan_in(std::int64_t in, std::int64_t out, Rng& rng) {
        w = Tensor<T>({in, out});
        b = Tensor<T>({out});
        fill_kaiming_uniform(w, rng, in);
    }

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        v(prefix + ".w", w);
        v(prefix + ".b", b);
    }
};

template <typename T>
struct ConvParams {
    Tensor<T> w, b;  // [out, in, k, k], [out]

    void init(std::int64_t out, std::int64_t in, std::int64_t k, Rng& rng) {
        w = Tensor<T>({out, in, k, k});
        b = Tensor<T>({out});
        fill_kaiming_uniform(w, rng, in * k * k);
    }

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        v(prefix + ".w", w);
        v(prefix + ".b", b);
    }
};

template <typename T>
struct DWConvParams {
    Tensor<T> w, b;  // [C, k, k], [C]

    void init(std::int64_t c, std::int64_t k, Rng& rng) {
        w = Tensor<T>({c, k, k});
        b = Tensor<T>({c});
        fill_kaiming_uniform(w, rng, k * k);
    }

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        v(prefix + ".w", w);
        v(prefix + ".b", b);
    }
};

template <typename T>
struct LayerNormParams {
    Tensor<T> gamma, beta;

    void init(std::int64_t c) {
        gamma = Tensor<T>::full({c}, T{1});
        beta = Tensor<T>({c});
    }

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        v(prefix + ".gamma", gamma);
        v(prefix + ".beta", beta);
    }
};

// Squeeze-excitation channel gate.
template <typename T>
struct CAParams {
    LinearParams<T> squeeze, excite;

    void init(std::int64_t c, std::int64_t reduction, Rng& rng) {
        const std::int64_t mid = std::max<std::int64_t>(1, c / reduction);
        squeeze.init(c, mid, rng);
        excite.init(mid, c, rng);
    }

    template <typename V>
    void visit(const std::string& prefix, V&& v) {
        squeeze.visit(prefix + ".squeeze", v);
        excite.visit(prefix + ".excite", v);
    }
};

}  // namespace itsrn
