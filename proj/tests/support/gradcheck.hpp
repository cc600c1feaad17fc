#pragma once

// Central finite-difference oracle for Tape gradients. Independent of the
// backward closures: the numeric side only ever runs forward passes on a
// non-recording tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ude/numerics/rng.hpp"
#include "ude/numerics/tape.hpp"

namespace ude::testing {

using ForwardFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckResult {
    double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
    double analytic_norm = 0.0;
};

inline std::vector<Tensor> random_inputs(const std::vector<Shape>& shapes, Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<Tensor> out;
    for (const auto& s : shapes) {
        std::vector<double> v(numel(s));
        for (double& x : v) x = rng.uniform(lo, hi);
        out.emplace_back(s, std::move(v), true);
    }
    return out;
}

// Projects f's output onto fixed random weights so any output shape yields
// a scalar objective.
inline GradCheckResult check_gradients(const ForwardFn& f, std::vector<Tensor> inputs, Rng& rng, double h = 1e-5) {
    std::vector<double> weights;
    auto objective = [&](Tape& tape, const std::vector<Tensor>& in) {
        Tensor y = f(tape, in);
        if (weights.size() != y.numel()) {
            weights.resize(y.numel());
            for (double& w : weights) w = rng.uniform(-1.0, 1.0);
        }
        Tensor w(y.shape(), weights);
        return tape.sum(tape.mul(y, w));
    };

    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tape tape;
    Tensor loss = objective(tape, inputs);
    tape.backward(loss);

    std::vector<double> analytic, numeric;
    for (auto& t : inputs) {
        for (std::size_t i = 0; i < t.numel(); ++i) {
            analytic.push_back(t.grad()[i]);
            const double orig = t[i];
            t.mutable_values()[i] = orig + h;
            Tape p(false);
            const double fp = objective(p, inputs).item();
            t.mutable_values()[i] = orig - h;
            Tape m(false);
            const double fm = objective(m, inputs).item();
            t.mutable_values()[i] = orig;
            numeric.push_back((fp - fm) / (2.0 * h));
        }
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    GradCheckResult r;
    r.analytic_norm = std::sqrt(na);
    r.rel_error = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-7});
    return r;
}

}  // namespace ude::testing
