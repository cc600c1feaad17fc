#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ude/checkpoint.hpp"
#include "ude/mate/mate.hpp"
#include "ude/mq/mq.hpp"
#include "ude/numerics/nn.hpp"

namespace ude::utt {

using mq::TokenSequence;

// visible(r, c) <=> c < L or c <= r
VisibilityMask build_mask(std::size_t cond_len, std::size_t motion_len);

struct UTTConfig {
    std::size_t codebook_size = 64;  // K; vocabulary is K + 2
    std::size_t dim = 64;            // paper scale: 8 layers, hidden 1024
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t hidden = 128;
    std::size_t z_dim = 16;
    std::size_t max_tokens = 64;     // motion context window, BOS included
};

class UTTModel {
public:
    UTTModel(const UTTConfig& cfg, std::uint64_t seed);

    const UTTConfig& config() const { return cfg_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }
    int bos() const { return static_cast<int>(cfg_.codebook_size); }
    int eos() const { return static_cast<int>(cfg_.codebook_size) + 1; }
    std::size_t vocab() const { return cfg_.codebook_size + 2; }

    Tensor inject_z(Tape& tape, const Tensor& glob, const std::vector<double>& z) const;
    // prefix starts with BOS; returns S x (K+2), row i predicts token i+1.
    Tensor forward_logits(Tape& tape, const mate::CondEmbedding& cond, const std::vector<int>& prefix,
                          const std::optional<std::vector<double>>& z = std::nullopt) const;

    const nn::Linear& z_layer(int i) const { return i == 0 ? z1_ : z2_; }

    CheckpointSection to_section() const;
    static UTTModel from_section(const CheckpointSection& s);

private:
    UTTConfig cfg_;
    nn::ParamSet params_;
    Tensor token_table_;
    nn::TransformerStack stack_;
    nn::Linear out_;
    nn::Linear z1_, z2_;
    Tensor pos_;
};

// Position of motion input row i in the shared sinusoidal table. Row i
// predicts the token covering frames 4i..4i+3, so it reuses the position of
// condition row 4i+1 (frame 4i of an audio condition).
std::size_t motion_position(std::size_t row);

struct SamplingConfig {
    bool greedy = false;
    double temperature = 1.0;
    std::size_t top_k = 0;  // 0 means K / 4
};

struct GenerateOptions {
    std::size_t max_len = 16;
    std::size_t min_len = 0;  // EOS is suppressed until this many tokens exist
    SamplingConfig sampling;
    TokenSequence primitive;
    std::optional<std::vector<double>> z;
    std::uint64_t seed = 0;
};

// Picks a token from one logits row; ids in `banned` are never chosen.
int sample_token(std::span<const double> logits, const SamplingConfig& s, std::size_t default_top_k,
                 const std::vector<int>& banned, Rng& rng);

TokenSequence generate_tokens(const UTTModel& model, const mate::CondEmbedding& cond, const GenerateOptions& opt);

struct DiscConfig {
    std::size_t channels = 24;
    std::size_t cond_dim = 64;
    std::size_t dim = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t hidden = 128;
};

class Discriminator {
public:
    Discriminator(const DiscConfig& cfg, std::uint64_t seed);

    const DiscConfig& config() const { return cfg_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    // motion: T x channels (MQ-normalized); returns T/4 x 1 patch scores.
    Tensor forward(Tape& tape, const Tensor& e_glob, const Tensor& motion) const;

    CheckpointSection to_section() const;
    static Discriminator from_section(const CheckpointSection& s);

private:
    DiscConfig cfg_;
    nn::ParamSet params_;
    Tensor conv1_, conv1_b_, conv2_, conv2_b_;
    nn::Linear cond_fc_;
    nn::TransformerStack stack_;
    nn::Linear score_;
};

struct UTTLossParts {
    Tensor total;
    Tensor ce;
    Tensor adv;
    Tensor logits;
    Tensor fake_motion;  // decoded straight-through motion, normalized space
};

// L = L_ce + beta_adv * L_adv. The MQ model is used frozen.
UTTLossParts utt_loss(Tape& tape, const UTTModel& model, const Discriminator& disc, const mq::MQModel& mq,
                      const mate::CondEmbedding& cond, const TokenSequence& gt,
                      const std::optional<std::vector<double>>& z, double beta_adv);

// Hinge objective: mean relu(1 - D(real)) + mean relu(1 + D(fake)).
Tensor disc_hinge_loss(Tape& tape, const Discriminator& disc, const Tensor& e_glob, const Tensor& real,
                       const Tensor& fake);

}  // namespace ude::utt
