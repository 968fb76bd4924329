#pragma once

// Two interchangeable execution backends behind one op surface. Model code
// is written once against a Ctx; EagerCtx computes immediately (inference,
// intermediates freed by scope), TapeCtx records onto a Tape for backward.
// Both run the same kernels in the same order, so outputs agree bit-exactly.

#include <utility>

#include "itsrn/kernels.hpp"
#include "itsrn/tape.hpp"

namespace itsrn {

template <typename T>
struct EagerCtx {
    using Value = Tensor<T>;

    Value use(const Tensor<T>& p) { return p; }
    Value constant(Tensor<T> t) { return t; }

    Value matmul(const Value& a, const Value& b) { return itsrn::matmul(a, b); }
    Value add(const Value& a, const Value& b) { return itsrn::add(a, b); }
    Value mul(const Value& a, const Value& b) { return itsrn::mul(a, b); }
    Value scale(const Value& a, T s) { return itsrn::scale(a, s); }
    Value add_rows(const Value& x, const Value& b) { return itsrn::add_rows(x, b); }
    Value mul_rows(const Value& x, const Value& s) { return itsrn::mul_rows(x, s); }
    Value scale_rows_const(const Value& x, std::vector<T> w) { return itsrn::scale_rows(x, w); }
    Value act(const Value& x, Act fn) { return itsrn::activation(x, fn); }
    Value softmax_rows(const Value& x) { return itsrn::softmax(x, x.rank() - 1); }
    Value layer_norm_rows(const Value& x, const Value& g, const Value& b, T eps) {
        return itsrn::layer_norm(x, g, b, eps);
    }
    Value conv2d(const Value& x, const Value& w, const Value& b) { return itsrn::conv2d(x, w, b); }
    Value depthwise_conv2d(const Value& x, const Value& w, const Value& b) {
        return itsrn::depthwise_conv2d(x, w, b);
    }
    Value gather(const Value& x, const IndexMap& m) { return itsrn::gather(x, m); }
    Value reshape(const Value& x, Shape s) { return x.reshaped(std::move(s)); }
    Value concat_cols(const Value& a, const Value& b) { return itsrn::concat_cols(a, b); }
    Value mean_rows(const Value& x) { return itsrn::mean_rows(x); }
    Value window_attention(const Value& q, const Value& k, const Value& v, const Value& table,
                           const AttnPlan<T>& plan) {
        return window_attention_forward(q, k, v, table, plan);
    }

    const Tensor<T>& peek(const Value& v) const { return v; }
};

template <typename T>
struct TapeCtx {
    using Value = Var;

    explicit TapeCtx(Tape<T>& tape) : tape_(tape) {}

    Value use(const Tensor<T>& p) { return tape_.param(p); }
    Value constant(Tensor<T> t) { return tape_.constant(std::move(t)); }

    Value matmul(Value a, Value b) { return tape_.matmul(a, b); }
    Value add(Value a, Value b) { return tape_.add(a, b); }
    Value mul(Value a, Value b) { return tape_.mul(a, b); }
    Value scale(Value a, T s) { return tape_.scale(a, s); }
    Value add_rows(Value x, Value b) { return tape_.add_rows(x, b); }
    Value mul_rows(Value x, Value s) { return tape_.mul_rows(x, s); }
    Value scale_rows_const(Value x, std::vector<T> w) {
        return tape_.scale_rows_const(x, std::move(w));
    }
    Value act(Value x, Act fn) { return tape_.act(x, fn); }
    Value softmax_rows(Value x) { return tape_.softmax_rows(x); }
    Value layer_norm_rows(Value x, Value g, Value b, T eps) {
        return tape_.layer_norm_rows(x, g, b, eps);
    }
    Value conv2d(Value x, Value w, Value b) { return tape_.conv2d(x, w, b); }
    Value depthwise_conv2d(Value x, Value w, Value b) { return tape_.depthwise_conv2d(x, w, b); }
    Value gather(Value x, IndexMap m) { return tape_.gather(x, std::move(m)); }
    Value reshape(Value x, Shape s) { return tape_.reshape(x, std::move(s)); }
    Value concat_cols(Value a, Value b) { return tape_.concat_cols(a, b); }
    Value mean_rows(Value x) { return tape_.mean_rows(x); }
    Value window_attention(Value q, Value k, Value v, Value table, const AttnPlan<T>& plan) {
        return tape_.window_attention(q, k, v, table, plan);
    }

    const Tensor<T>& peek(Value v) const { return tape_.value(v); }

    Tape<T>& tape() { return tape_; }

private:
    Tape<T>& tape_;
};

}  // namespace itsrn
