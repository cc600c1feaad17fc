#include "ude/numerics/adam.hpp"

#include <cmath>

#include "ude/errors.hpp"

namespace ude {

void adam_step(AdamState& state, std::span<double> param, std::span<const double> grad, const AdamConfig& cfg,
               const std::string& name) {
    if (param.size() != grad.size()) throw DimensionError("adam_step: gradient size mismatch for " + name);
    if (state.m.size() != param.size()) {
        state.m.assign(param.size(), 0.0);
        state.v.assign(param.size(), 0.0);
        state.t = 0;
    }
    for (double g : grad) {
        if (!std::isfinite(g)) throw TrainingError("non-finite gradient for parameter '" + name + "'");
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : cfg_(cfg), params_(std::move(params)), states_(params_.size()) {}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        adam_step(states_[i], p.mutable_values(), p.grad(), cfg_, p.name());
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace ude
