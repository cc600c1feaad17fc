#pragma once

#include <cstdint>
#include <vector>

#include "ude/utt/utt.hpp"

namespace ude::utt {

struct UTTSample {
    mate::ModalityInput input;
    TokenSequence tokens;  // ground truth from the frozen MQ
    Tensor motion;         // MQ-normalized frames, T x c
};

UTTSample make_utt_sample(const mq::MQModel& mq, const mate::ModalityInput& input, const motion::MotionSequence& m);

struct UTTTrainConfig {
    std::size_t epochs = 30;
    std::size_t batch = 16;
    AdamConfig adam;               // lr default 1e-4
    AdamConfig disc_adam;
    double beta_adv = 1.0;
    double z_fraction = 0.5;       // share of sequences trained with z injected
    bool adversarial = true;
};

struct UTTTrainResult {
    std::vector<double> ce_history;
    std::vector<double> adv_history;
    std::vector<double> disc_history;
};

// Alternates generator (MATE + UTT) and discriminator steps 1:1. Text and
// audio batches are interleaved 1:1 while both modalities last.
UTTTrainResult train_utt(mate::MATEModel& mate, UTTModel& utt, Discriminator& disc, mq::MQModel& mq,
                         const std::vector<UTTSample>& samples, const UTTTrainConfig& cfg, std::uint64_t seed);

// Mean teacher-forced cross-entropy without z.
double mean_cross_entropy(const mate::MATEModel& mate, const UTTModel& utt, const std::vector<UTTSample>& samples);

}  // namespace ude::utt
