#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ude/checkpoint.hpp"
#include "ude/motion/types.hpp"
#include "ude/numerics/adam.hpp"
#include "ude/numerics/nn.hpp"

namespace ude::mq {

using TokenSequence = std::vector<int>;

inline constexpr std::size_t kDownsample = 4;

struct MQConfig {
    std::size_t channels = 24;       // J * 3
    std::size_t hidden = 64;
    std::size_t code_dim = 32;       // paper scale: 1024
    std::size_t codebook_size = 64;  // paper scale: 2048
    double beta1 = 1.0;              // codebook term
    double beta2 = 1.0;              // commitment term
};

// Row-wise nearest code under squared Euclidean distance; ties go to the
// lowest index.
TokenSequence quantize(std::span<const double> codebook, std::size_t k, std::size_t d, std::span<const double> e,
                       std::size_t rows);

struct VQLossParts {
    Tensor total;
    Tensor reconstruction;
    Tensor codebook;
    Tensor commitment;
    TokenSequence tokens;
    Tensor embedding;  // encoder output e
    Tensor recon;      // decoder output, normalized space
};

// Frame layout the MQ works in: root as per-frame ground-plane displacement
// (x, z deltas, first frame measured from the origin) plus absolute height;
// other joints relative to the root on the ground plane, absolute height.
// Exactly invertible by a running sum.
std::vector<double> to_root_relative(const motion::MotionSequence& m);
motion::MotionSequence from_root_relative(std::span<const double> f, std::size_t rows, std::size_t channels,
                                          double fps);

class MQModel {
public:
    MQModel(const MQConfig& cfg, std::uint64_t seed);

    const MQConfig& config() const { return cfg_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }
    Tensor codebook() const { return codebook_; }

    // Per-coordinate standardization learned from data.
    void fit_normalization(const std::vector<const motion::MotionSequence*>& data);
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stddev() const { return std_; }
    Tensor normalize(const motion::MotionSequence& m) const;  // T x c
    motion::MotionSequence denormalize(const Tensor& x, double fps) const;

    // x: T x c normalized frames -> T/4 x d
    Tensor encode(Tape& tape, const Tensor& x) const;
    // e: T' x d -> T'*4 x c normalized frames
    Tensor decode(Tape& tape, const Tensor& e) const;
    Tensor code_rows(Tape& tape, const TokenSequence& z) const;  // T' x d

    TokenSequence quantize(const Tensor& e) const;
    TokenSequence tokenize(const motion::MotionSequence& m) const;
    motion::MotionSequence decode_tokens(const TokenSequence& z, double fps) const;

    VQLossParts vq_loss(Tape& tape, const Tensor& x) const;

    CheckpointSection to_section() const;
    static MQModel from_section(const CheckpointSection& s);

private:
    MQConfig cfg_;
    nn::ParamSet params_;
    Tensor enc_w[3], enc_b[3], dec_w[3], dec_b[3];
    Tensor codebook_;
    std::vector<double> mean_, std_;
};

struct MQTrainConfig {
    std::size_t epochs = 50;
    std::size_t batch = 16;
    AdamConfig adam;  // lr default 1e-4
    bool reset_dead_codes = true;
};

struct MQTrainResult {
    std::vector<double> loss_history;  // mean total loss per epoch
    std::vector<double> recon_history;
};

// Frames must be divisible by 4. Deterministic in seed.
MQTrainResult train_mq(MQModel& model, const std::vector<const motion::MotionSequence*>& data,
                       const MQTrainConfig& cfg, std::uint64_t seed);

// Fraction of codes hit at least once when tokenizing data.
double codebook_utilization(const MQModel& model, const std::vector<const motion::MotionSequence*>& data);

}  // namespace ude::mq
