#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ude/numerics/tensor.hpp"

namespace ude {

struct AdamConfig {
    double lr = 1e-4;  // paper learning rate for every stage
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moments for one parameter tensor.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
};

// One bias-corrected Adam update of `param` in place. Throws TrainingError
// naming `name` when a gradient entry is not finite.
void adam_step(AdamState& state, std::span<double> param, std::span<const double> grad, const AdamConfig& cfg,
               const std::string& name = {});

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    void step();
    void zero_grad();
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    std::size_t steps() const { return states_.empty() ? 0 : states_.front().t; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<AdamState> states_;
};

}  // namespace ude
