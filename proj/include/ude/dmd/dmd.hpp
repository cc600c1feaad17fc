#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ude/checkpoint.hpp"
#include "ude/mq/mq.hpp"
#include "ude/numerics/adam.hpp"
#include "ude/numerics/nn.hpp"

namespace ude::dmd {

using mq::TokenSequence;

// Tables are indexed by t - 1 for t in [1, steps].
struct NoiseSchedule {
    std::size_t steps = 0;
    std::vector<double> beta, alpha, alpha_bar;

    double beta_at(std::size_t t) const { return beta.at(t - 1); }
    double alpha_at(std::size_t t) const { return alpha.at(t - 1); }
    double alpha_bar_at(std::size_t t) const { return alpha_bar.at(t - 1); }
};

NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end);
// Linear 1e-4..0.02 at 1000 steps, rescaled by 1000 / steps (capped below 1).
NoiseSchedule default_schedule(std::size_t steps);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
std::vector<double> q_sample(const NoiseSchedule& s, std::span<const double> x0, std::size_t t,
                             std::span<const double> eps);

using NoisePredictor = std::function<std::vector<double>(std::size_t t, const std::vector<double>& x_t)>;

// Ancestral sampler starting from x_T ~ N(0, I); zeta = 0 at t = 1 when
// deterministic_tail is set. clip_x0 > 0 switches to the posterior-mean form
// with the implied x0 clamped to [-clip_x0, clip_x0]; unclamped it is the
// same update.
std::vector<double> sample_reverse(const NoiseSchedule& s, std::size_t size, const NoisePredictor& eps_hat, Rng& rng,
                                   bool deterministic_tail = true, double clip_x0 = 0.0);
// Same update from a caller-supplied x_T.
std::vector<double> reverse_from(const NoiseSchedule& s, std::vector<double> x, const NoisePredictor& eps_hat,
                                 Rng& rng, bool deterministic_tail = true, double clip_x0 = 0.0);

struct DMDConfig {
    std::size_t channels = 24;
    std::size_t codebook_size = 64;
    std::size_t dim = 64;       // paper scale: 8 + 8 layers
    std::size_t enc_layers = 2;
    std::size_t dec_layers = 2;
    std::size_t heads = 4;
    std::size_t hidden = 128;
    std::size_t steps = 50;     // paper scale: 1000
    std::size_t max_frames = 256;
    double clip_x0 = 5.0;       // sampling clamp in normalized units; 0 disables
};

class DMDModel {
public:
    DMDModel(const DMDConfig& cfg, std::uint64_t seed);

    const DMDConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return sched_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }
    Tensor time_table() const { return emb_t_; }

    Tensor encode_condition(Tape& tape, const TokenSequence& z) const;  // 1 x D after temporal max-pool
    Tensor encode_tokens(Tape& tape, const TokenSequence& z) const;      // L x D before pooling
    Tensor predict_noise(Tape& tape, const Tensor& cond, std::size_t t, const Tensor& x_t) const;

    // Frames = 4 x token count unless given.
    Tensor sample(const TokenSequence& z, std::uint64_t seed, std::size_t frames = 0,
                  bool deterministic_tail = true) const;

    CheckpointSection to_section() const;
    static DMDModel from_section(const CheckpointSection& s);

private:
    DMDConfig cfg_;
    NoiseSchedule sched_;
    nn::ParamSet params_;
    Tensor token_table_;
    nn::TransformerStack cond_stack_;
    nn::Linear in_proj_, out_proj_;
    Tensor emb_t_;
    nn::TransformerStack dec_stack_;
    Tensor pos_;
};

// Draws t ~ U[1, steps] and eps ~ N(0, I); squared error against eps_hat.
Tensor dmd_loss(Tape& tape, const DMDModel& model, const Tensor& x0, const TokenSequence& z, Rng& rng);

struct DMDSample {
    Tensor x0;  // MQ-normalized frames
    TokenSequence tokens;
};

struct DMDTrainConfig {
    std::size_t epochs = 30;
    std::size_t batch = 16;
    AdamConfig adam;
};

std::vector<double> train_dmd(DMDModel& model, const std::vector<DMDSample>& data, const DMDTrainConfig& cfg,
                              std::uint64_t seed);

}  // namespace ude::dmd
