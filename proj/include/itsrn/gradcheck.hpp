#pragma once

// Central-difference verification of tape gradients. Always runs at 64-bit.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "itsrn/common.hpp"
#include "itsrn/tape.hpp"

namespace itsrn {

// One differentiable construction: owns its tensors, rebuilds its graph on
// demand so finite differences can re-evaluate the loss after a nudge.
class GradCase {
public:
    virtual ~GradCase() = default;
    virtual std::string name() const = 0;
    virtual void init(std::uint64_t seed) = 0;
    virtual std::vector<Tensor<double>*> params() = 0;
    virtual Var build(Tape<double>& tape) = 0;
};

struct GradCheckRow {
    std::string op;
    double max_rel_err = 0.0;
    std::int64_t elements_checked = 0;
    // Elements whose |analytic - fd| landed below the difference quotient's
    // 64-bit cancellation floor (eps * |loss| / step); at that magnitude the
    // quotient measures roundoff, not the gradient.
    std::int64_t noise_floor_elements = 0;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;

    double worst() const {
        double w = 0.0;
        for (const auto& r : rows) w = std::max(w, r.max_rel_err);
        return w;
    }
    bool pass(double tol) const { return worst() <= tol; }
};

// Failures are reported, not thrown; callers decide what a pass means.
inline GradCheckReport check_gradients(std::vector<std::unique_ptr<GradCase>>& cases, int seeds,
                                       double fd_step = 1e-4) {
    constexpr std::int64_t kSubsampleAbove = 10000;
    GradCheckReport report;
    for (auto& c : cases) {
        GradCheckRow row;
        row.op = c->name();
        for (int s = 0; s < seeds; ++s) {
            const std::uint64_t seed = 0x5151u + 977u * static_cast<std::uint64_t>(s);
            c->init(seed);

            Tape<double> tape;
            Var loss = c->build(tape);
            tape.backward(loss);

            auto params = c->params();
            std::int64_t total = 0;
            for (auto* p : params) total += p->numel();
            const bool subsample = total > kSubsampleAbove;
            Rng pick(seed ^ 0xabcdefull);

            auto eval_loss = [&]() {
                Tape<double> t2;
                Var l = c->build(t2);
                return t2.value(l)[0];
            };
            const double f0 = eval_loss();

            for (auto* p : params) {
                Tensor<double> analytic = tape.grad_of(*p);
                for (std::int64_t i = 0; i < p->numel(); ++i) {
                    if (subsample && pick.uniform() > 0.05) continue;
                    const double orig = (*p)[i];
                    auto fd_at = [&](double h) {
                        (*p)[i] = orig + h;
                        const double fp = eval_loss();
                        (*p)[i] = orig - h;
                        const double fm = eval_loss();
                        (*p)[i] = orig;
                        return (fp - fm) / (2.0 * h);
                    };
                    const double a = analytic[i];
                    auto rel_of = [&](double fd) {
                        return std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
                    };
                    const double fd0 = fd_at(fd_step);
                    double rel = rel_of(fd0);
                    // A quotient contaminated by a ReLU kink inside the step
                    // interval shrinks as the step shrinks; a wrong gradient
                    // disagrees at every step size.
                    if (rel > 1e-5)
                        for (double h : {fd_step / 8.0, fd_step / 64.0})
                            rel = std::min(rel, rel_of(fd_at(h)));
                    const double noise_floor =
                        64.0 * std::numeric_limits<double>::epsilon() *
                        std::max(1.0, std::abs(f0)) / fd_step;
                    if (rel > 1e-4 && std::abs(a - fd0) <= noise_floor) {
                        ++row.noise_floor_elements;
                        rel = 0.0;
                    }
                    row.max_rel_err = std::max(row.max_rel_err, rel);
                    ++row.elements_checked;
                }
            }
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace itsrn
