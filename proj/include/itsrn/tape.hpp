#pragma once

// Reverse-mode differentiation over a static graph of the numeric kernels.
// A tape is rebuilt per training step, consumed by one backward() call, and
// then discarded. Creation order is the topological order, so backward walks
// node ids in reverse and accumulates into parent gradient buffers.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "itsrn/kernels.hpp"
#include "itsrn/tensor.hpp"

namespace itsrn {

struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- leaves ---

    Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

    Var leaf(Tensor<T> value, bool needs_grad) { return push(std::move(value), needs_grad, nullptr); }

    // Differentiable leaf keyed by the parameter's address; repeated use of
    // the same parameter within a step shares one node so grads accumulate.
    Var param(const Tensor<T>& p) {
        auto it = param_vars_.find(static_cast<const void*>(&p));
        if (it != param_vars_.end()) return it->second;
        Var v = leaf(p, true);
        param_vars_.emplace(static_cast<const void*>(&p), v);
        return v;
    }

    const Tensor<T>& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

    // --- ops ---

    Var add(Var a, Var b) {
        return push(itsrn::add(value(a), value(b)), needs(a) || needs(b),
                    [a, b](Tape& t, const Tensor<T>& g) {
                        t.accum(a, g);
                        t.accum(b, g);
                    });
    }

    Var mul(Var a, Var b) {
        return push(itsrn::mul(value(a), value(b)), needs(a) || needs(b),
                    [a, b](Tape& t, const Tensor<T>& g) {
                        if (t.needs(a)) t.accum(a, itsrn::mul(g, t.value(b)));
                        if (t.needs(b)) t.accum(b, itsrn::mul(g, t.value(a)));
                    });
    }

    Var scale(Var a, T s) {
        return push(itsrn::scale(value(a), s), needs(a), [a, s](Tape& t, const Tensor<T>& g) {
            t.accum(a, itsrn::scale(g, s));
        });
    }

    Var matmul(Var a, Var b) {
        return push(itsrn::matmul(value(a), value(b)), needs(a) || needs(b),
                    [a, b](Tape& t, const Tensor<T>& g) {
                        if (t.needs(a)) t.accum(a, itsrn::matmul(g, transpose2d(t.value(b))));
                        if (t.needs(b)) t.accum(b, itsrn::matmul(transpose2d(t.value(a)), g));
                    });
    }

    Var add_rows(Var x, Var b) {
        return push(itsrn::add_rows(value(x), value(b)), needs(x) || needs(b),
                    [x, b](Tape& t, const Tensor<T>& g) {
                        t.accum(x, g);
                        if (t.needs(b)) {
                            const std::int64_t c = t.value(b).numel();
                            const std::int64_t rows = g.numel() / c;
                            Tensor<T> db(t.value(b).shape());
                            for (std::int64_t r = 0; r < rows; ++r)
                                for (std::int64_t i = 0; i < c; ++i) db[i] += g[r * c + i];
                            t.accum(b, db);
                        }
                    });
    }

    Var mul_rows(Var x, Var s) {
        return push(itsrn::mul_rows(value(x), value(s)), needs(x) || needs(s),
                    [x, s](Tape& t, const Tensor<T>& g) {
                        const std::int64_t c = t.value(s).numel();
                        const std::int64_t rows = g.numel() / c;
                        if (t.needs(x)) {
                            Tensor<T> dx(t.value(x).shape());
                            const Tensor<T>& sv = t.value(s);
                            for (std::int64_t r = 0; r < rows; ++r)
                                for (std::int64_t i = 0; i < c; ++i) dx[r * c + i] = g[r * c + i] * sv[i];
                            t.accum(x, dx);
                        }
                        if (t.needs(s)) {
                            Tensor<T> ds(t.value(s).shape());
                            const Tensor<T>& xv = t.value(x);
                            for (std::int64_t r = 0; r < rows; ++r)
                                for (std::int64_t i = 0; i < c; ++i) ds[i] += g[r * c + i] * xv[r * c + i];
                            t.accum(s, ds);
                        }
                    });
    }

    Var scale_rows_const(Var x, std::vector<T> w) {
        Tensor<T> y = itsrn::scale_rows(value(x), w);
        return push(std::move(y), needs(x), [x, w = std::move(w)](Tape& t, const Tensor<T>& g) {
            t.accum(x, itsrn::scale_rows(g, w));
        });
    }

    Var act(Var x, Act fn) {
        Var out = push(itsrn::activation(value(x), fn), needs(x), nullptr);
        node(out).back = [x, fn, out](Tape& t, const Tensor<T>& g) {
            const Tensor<T>& xin = t.value(x);   // saved pre-activation
            const Tensor<T>& yout = t.value(out);
            Tensor<T> dx(xin.shape());
            for (std::int64_t i = 0; i < xin.numel(); ++i) {
                T d{};
                switch (fn) {
                    case Act::relu: d = xin[i] > T{0} ? T{1} : T{0}; break;
                    case Act::sigmoid: d = yout[i] * (T{1} - yout[i]); break;
                    case Act::tanh: d = T{1} - yout[i] * yout[i]; break;
                    case Act::sin: d = std::cos(xin[i]); break;
                }
                dx[i] = g[i] * d;
            }
            t.accum(x, dx);
        };
        return out;
    }

    Var softmax_rows(Var x) {
        Var out = push(itsrn::softmax(value(x), value(x).rank() - 1), needs(x), nullptr);
        node(out).back = [x, out](Tape& t, const Tensor<T>& g) {
            const Tensor<T>& y = t.value(out);
            const std::int64_t c = y.dim(y.rank() - 1);
            const std::int64_t rows = y.numel() / c;
            Tensor<T> dx(y.shape());
            for (std::int64_t r = 0; r < rows; ++r) {
                T dot{0};
                for (std::int64_t i = 0; i < c; ++i) dot += g[r * c + i] * y[r * c + i];
                for (std::int64_t i = 0; i < c; ++i)
                    dx[r * c + i] = y[r * c + i] * (g[r * c + i] - dot);
            }
            t.accum(x, dx);
        };
        return out;
    }

    Var layer_norm_rows(Var x, Var gamma, Var beta, T eps) {
        return push(itsrn::layer_norm(value(x), value(gamma), value(beta), eps),
                    needs(x) || needs(gamma) || needs(beta),
                    [x, gamma, beta, eps](Tape& t, const Tensor<T>& g) {
                        const Tensor<T>& xv = t.value(x);
                        const Tensor<T>& gv = t.value(gamma);
                        const std::int64_t c = xv.dim(xv.rank() - 1);
                        const std::int64_t rows = xv.numel() / c;
                        Tensor<T> dx(xv.shape());
                        Tensor<T> dgamma(t.value(gamma).shape());
                        Tensor<T> dbeta(t.value(beta).shape());
                        std::vector<T> xhat(static_cast<std::size_t>(c));
                        for (std::int64_t r = 0; r < rows; ++r) {
                            const T* xr = xv.data() + r * c;
                            const T* gr = g.data() + r * c;
                            T mean{0};
                            for (std::int64_t i = 0; i < c; ++i) mean += xr[i];
                            mean /= static_cast<T>(c);
                            T var{0};
                            for (std::int64_t i = 0; i < c; ++i) {
                                T d = xr[i] - mean;
                                var += d * d;
                            }
                            var /= static_cast<T>(c);
                            const T inv = T{1} / std::sqrt(var + eps);
                            T m1{0}, m2{0};
                            for (std::int64_t i = 0; i < c; ++i) {
                                xhat[static_cast<std::size_t>(i)] = (xr[i] - mean) * inv;
                                const T gy = gr[i] * gv[i];
                                m1 += gy;
                                m2 += gy * xhat[static_cast<std::size_t>(i)];
                            }
                            m1 /= static_cast<T>(c);
                            m2 /= static_cast<T>(c);
                            for (std::int64_t i = 0; i < c; ++i) {
                                const T gy = gr[i] * gv[i];
                                dx[r * c + i] = (gy - m1 - xhat[static_cast<std::size_t>(i)] * m2) * inv;
                                dgamma[i] += gr[i] * xhat[static_cast<std::size_t>(i)];
                                dbeta[i] += gr[i];
                            }
                        }
                        t.accum(x, dx);
                        t.accum(gamma, dgamma);
                        t.accum(beta, dbeta);
                    });
    }

    Var conv2d(Var x, Var w, Var b) {
        return push(itsrn::conv2d(value(x), value(w), value(b)), needs(x) || needs(w) || needs(b),
                    [x, w, b](Tape& t, const Tensor<T>& g) { t.conv2d_backward(x, w, b, g, false); });
    }

    Var depthwise_conv2d(Var x, Var w, Var b) {
        return push(itsrn::depthwise_conv2d(value(x), value(w), value(b)),
                    needs(x) || needs(w) || needs(b),
                    [x, w, b](Tape& t, const Tensor<T>& g) { t.conv2d_backward(x, w, b, g, true); });
    }

    Var gather(Var x, IndexMap map) {
        Tensor<T> y = itsrn::gather(value(x), map);
        return push(std::move(y), needs(x), [x, map = std::move(map)](Tape& t, const Tensor<T>& g) {
            Tensor<T> dx(t.value(x).shape());
            for (std::int64_t i = 0; i < g.numel(); ++i) {
                const std::int64_t s = map.src[static_cast<std::size_t>(i)];
                if (s >= 0) dx[s] += g[i];
            }
            t.accum(x, dx);
        });
    }

    Var reshape(Var x, Shape s) {
        return push(value(x).reshaped(std::move(s)), needs(x), [x](Tape& t, const Tensor<T>& g) {
            t.accum(x, g.reshaped(t.value(x).shape()));
        });
    }

    Var concat_cols(Var a, Var b) {
        const std::int64_t rows = value(a).dim(0), ca = value(a).dim(1), cb = value(b).dim(1);
        return push(itsrn::concat_cols(value(a), value(b)), needs(a) || needs(b),
                    [a, b, rows, ca, cb](Tape& t, const Tensor<T>& g) {
                        if (t.needs(a)) {
                            Tensor<T> da({rows, ca});
                            for (std::int64_t r = 0; r < rows; ++r)
                                for (std::int64_t i = 0; i < ca; ++i) da.at2(r, i) = g[r * (ca + cb) + i];
                            t.accum(a, da);
                        }
                        if (t.needs(b)) {
                            Tensor<T> db({rows, cb});
                            for (std::int64_t r = 0; r < rows; ++r)
                                for (std::int64_t i = 0; i < cb; ++i)
                                    db.at2(r, i) = g[r * (ca + cb) + ca + i];
                            t.accum(b, db);
                        }
                    });
    }

    Var mean_rows(Var x) {
        const std::int64_t c = value(x).dim(value(x).rank() - 1);
        const std::int64_t rows = value(x).numel() / c;
        return push(itsrn::mean_rows(value(x)), needs(x), [x, rows, c](Tape& t, const Tensor<T>& g) {
            Tensor<T> dx(t.value(x).shape());
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t i = 0; i < c; ++i) dx[r * c + i] = g[i] / static_cast<T>(rows);
            t.accum(x, dx);
        });
    }

    Var sum_all(Var x) {
        const Tensor<T>& xv = value(x);
        T s{0};
        for (std::int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
        Tensor<T> y({1});
        y[0] = s;
        return push(std::move(y), needs(x), [x](Tape& t, const Tensor<T>& g) {
            t.accum(x, Tensor<T>::full(t.value(x).shape(), g[0]));
        });
    }

    // Mean absolute error against a constant target; subgradient at 0 is 0.
    Var l1_loss(Var pred, Tensor<T> gt) {
        const Tensor<T>& pv = value(pred);
        if (pv.shape() != gt.shape())
            throw shape_error("l1_loss: shape mismatch " + shape_str(pv.shape()) + " vs " +
                              shape_str(gt.shape()));
        T s{0};
        for (std::int64_t i = 0; i < pv.numel(); ++i) s += std::abs(pv[i] - gt[i]);
        Tensor<T> y({1});
        y[0] = s / static_cast<T>(pv.numel());
        return push(std::move(y), needs(pred),
                    [pred, gt = std::move(gt)](Tape& t, const Tensor<T>& g) {
                        const Tensor<T>& pv2 = t.value(pred);
                        const T inv = g[0] / static_cast<T>(pv2.numel());
                        Tensor<T> dx(pv2.shape());
                        for (std::int64_t i = 0; i < pv2.numel(); ++i) {
                            const T d = pv2[i] - gt[i];
                            dx[i] = d > T{0} ? inv : (d < T{0} ? -inv : T{0});
                        }
                        t.accum(pred, dx);
                    });
    }

    Var window_attention(Var q, Var k, Var v, Var bias_table, const AttnPlan<T>& plan) {
        auto probs = std::make_shared<Tensor<T>>();
        Tensor<T> out =
            window_attention_forward(value(q), value(k), value(v), value(bias_table), plan, probs.get());
        const std::int64_t c = value(q).dim(1);
        const std::int64_t nw = plan.num_windows, m2 = plan.tokens, hd = plan.heads, d = c / hd;
        const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(d));
        return push(std::move(out), needs(q) || needs(k) || needs(v) || needs(bias_table),
                    [q, k, v, bias_table, plan, probs, nw, m2, hd, d, c, inv_sqrt_d](
                        Tape& t, const Tensor<T>& g) {
                        const Tensor<T>& qv = t.value(q);
                        const Tensor<T>& kv = t.value(k);
                        const Tensor<T>& vv = t.value(v);
                        Tensor<T> dq(qv.shape()), dk(kv.shape()), dv(vv.shape());
                        Tensor<T> dbt(t.value(bias_table).shape());
                        std::vector<T> dp(static_cast<std::size_t>(m2));
                        for (std::int64_t w = 0; w < nw; ++w) {
                            for (std::int64_t h = 0; h < hd; ++h) {
                                const T* pw = probs->data() + ((w * hd + h) * m2) * m2;
                                for (std::int64_t i = 0; i < m2; ++i) {
                                    const T* gi = g.data() + (w * m2 + i) * c + h * d;
                                    T dot{0};
                                    for (std::int64_t j = 0; j < m2; ++j) {
                                        const T* vj = vv.data() + (w * m2 + j) * c + h * d;
                                        T acc{0};
                                        for (std::int64_t e = 0; e < d; ++e) acc += gi[e] * vj[e];
                                        dp[static_cast<std::size_t>(j)] = acc;
                                        dot += acc * pw[i * m2 + j];
                                        T* dvj = dv.data() + (w * m2 + j) * c + h * d;
                                        const T p = pw[i * m2 + j];
                                        for (std::int64_t e = 0; e < d; ++e) dvj[e] += p * gi[e];
                                    }
                                    const T* qi = qv.data() + (w * m2 + i) * c + h * d;
                                    T* dqi = dq.data() + (w * m2 + i) * c + h * d;
                                    for (std::int64_t j = 0; j < m2; ++j) {
                                        const T sij = pw[i * m2 + j] * (dp[static_cast<std::size_t>(j)] - dot);
                                        dbt.at2(plan.bias_index[static_cast<std::size_t>(i * m2 + j)], h) += sij;
                                        const T* kj = kv.data() + (w * m2 + j) * c + h * d;
                                        T* dkj = dk.data() + (w * m2 + j) * c + h * d;
                                        for (std::int64_t e = 0; e < d; ++e) {
                                            dqi[e] += sij * kj[e] * inv_sqrt_d;
                                            dkj[e] += sij * qi[e] * inv_sqrt_d;
                                        }
                                    }
                                }
                            }
                        }
                        t.accum(q, dq);
                        t.accum(k, dk);
                        t.accum(v, dv);
                        t.accum(bias_table, dbt);
                    });
    }

    // --- backward ---

    void backward(Var loss) {
        if (used_) throw contract_error("tape: backward already ran on this tape");
        used_ = true;
        Node& ln = node(loss);
        if (ln.value.numel() != 1) throw contract_error("tape: loss node must be scalar");
        ensure_grad(ln);
        ln.grad[0] = T{1};
        for (std::int32_t id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.needs_grad || !n.back || n.grad.empty()) continue;
            n.back(*this, n.grad);
        }
    }

    bool has_run_backward() const { return used_; }

    // Gradient for a registered parameter; zeros if the parameter never
    // influenced the loss.
    Tensor<T> grad_of(const Tensor<T>& p) const {
        auto it = param_vars_.find(static_cast<const void*>(&p));
        if (it == param_vars_.end()) return Tensor<T>(p.shape());
        const Node& n = nodes_[static_cast<std::size_t>(it->second.id)];
        if (n.grad.empty()) return Tensor<T>(p.shape());
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // lazily allocated
        bool needs_grad = false;
        std::function<void(Tape&, const Tensor<T>&)> back;
    };

    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

    void ensure_grad(Node& n) {
        if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    }

    void accum(Var v, const Tensor<T>& g) {
        Node& n = node(v);
        if (!n.needs_grad) return;
        ensure_grad(n);
        for (std::int64_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
    }

    Var push(Tensor<T> value, bool needs_grad, std::function<void(Tape&, const Tensor<T>&)> back) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    void conv2d_backward(Var x, Var w, Var b, const Tensor<T>& g, bool depthwise) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& wv = value(w);
        const std::int64_t h = xv.dim(1), wd = xv.dim(2);
        const std::int64_t k = depthwise ? wv.dim(1) : wv.dim(2);
        const std::int64_t pad = (k - 1) / 2;
        const std::int64_t cin = xv.dim(0);
        const std::int64_t cout = depthwise ? cin : wv.dim(0);

        if (needs(b)) {
            Tensor<T> db(value(b).shape());
            for (std::int64_t oc = 0; oc < cout; ++oc)
                for (std::int64_t i = 0; i < h * wd; ++i) db[oc] += g[oc * h * wd + i];
            accum(b, db);
        }
        Tensor<T> dw(wv.shape());
        Tensor<T> dx(xv.shape());
        for (std::int64_t oc = 0; oc < cout; ++oc) {
            const std::int64_t ic_begin = depthwise ? oc : 0;
            const std::int64_t ic_end = depthwise ? oc + 1 : cin;
            for (std::int64_t oy = 0; oy < h; ++oy)
                for (std::int64_t ox = 0; ox < wd; ++ox) {
                    const T gv = g[(oc * h + oy) * wd + ox];
                    if (gv == T{0}) continue;
                    for (std::int64_t ic = ic_begin; ic < ic_end; ++ic) {
                        const std::int64_t wbase = depthwise ? oc * k * k : ((oc * cin + ic) * k) * k;
                        for (std::int64_t ky = 0; ky < k; ++ky) {
                            const std::int64_t iy = oy + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (std::int64_t kx = 0; kx < k; ++kx) {
                                const std::int64_t ix = ox + kx - pad;
                                if (ix < 0 || ix >= wd) continue;
                                dw[wbase + ky * k + kx] += gv * xv[(ic * h + iy) * wd + ix];
                                dx[(ic * h + iy) * wd + ix] += gv * wv[wbase + ky * k + kx];
                            }
                        }
                    }
                }
        }
        accum(w, dw);
        accum(x, dx);
    }

    std::vector<Node> nodes_;
    std::unordered_map<const void*, Var> param_vars_;
    bool used_ = false;
};

}  // namespace itsrn
