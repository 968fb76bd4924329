#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "itsrn/common.hpp"

namespace itsrn {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream oss;
    oss << '[';
    for (std::size_t i = 0; i < s.size(); ++i) oss << (i ? "x" : "") << s[i];
    oss << ']';
    return oss.str();
}

// Dense row-major N-d array of real scalars. Value semantics: copies are
// deep, ops never alias their inputs. float for training, double wherever a
// numeric check needs headroom.
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<std::size_t>(shape_numel(shape_)), T{0});
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
            throw shape_error("tensor: data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_str(shape_));
    }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    // 2-d/3-d accessors for the common layouts (rows x cols, chw).
    T& at2(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
    const T& at2(std::int64_t r, std::int64_t c) const {
        return data_[static_cast<std::size_t>(r * shape_[1] + c)];
    }
    T& at3(std::int64_t a, std::int64_t b, std::int64_t c) {
        return data_[static_cast<std::size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }
    const T& at3(std::int64_t a, std::int64_t b, std::int64_t c) const {
        return data_[static_cast<std::size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }

    // Same data reinterpreted under a new shape with equal element count.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw shape_error("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(s));
        Tensor out = *this;
        out.shape_ = std::move(s);
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> d(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(d));
    }

private:
    void validate_shape() const {
        for (auto d : shape_)
            if (d <= 0) throw shape_error("tensor: non-positive extent in " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
Tensor<T> tensor_from(Shape shape, std::initializer_list<T> values) {
    return Tensor<T>(std::move(shape), std::vector<T>(values));
}

// Debug-build finite check; release propagates NaN per the numerics policy.
template <typename T>
inline void debug_check_finite(const Tensor<T>& t, const char* where) {
#ifndef NDEBUG
    if (!t.all_finite()) throw contract_error(std::string("non-finite output in ") + where);
#else
    (void)t;
    (void)where;
#endif
}

}  // namespace itsrn
