#pragma once

#include <cstdint>
#include <vector>

#include "ude/checkpoint.hpp"
#include "ude/motion/types.hpp"
#include "ude/numerics/adam.hpp"
#include "ude/numerics/nn.hpp"

namespace ude::metrics {

struct RetrievalConfig {
    std::size_t channels = 24;
    std::size_t vocab_size = 64;
    std::size_t hidden = 64;
    std::size_t dim = 64;
    double temperature = 0.07;
};

// Motion branch: two strided convs, mean+max pool, linear. Text branch:
// embedding lookup, mean pool, two linears. Both outputs are unit rows.
class RetrievalEncoder {
public:
    RetrievalEncoder(const RetrievalConfig& cfg, std::uint64_t seed);

    const RetrievalConfig& config() const { return cfg_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    void fit_normalization(const std::vector<const motion::MotionSequence*>& data);

    Tensor embed_motion(Tape& tape, const motion::MotionSequence& m) const;  // 1 x dim
    Tensor embed_text(Tape& tape, const std::vector<int>& ids) const;         // 1 x dim
    std::vector<double> motion_embedding(const motion::MotionSequence& m) const;
    std::vector<double> text_embedding(const std::vector<int>& ids) const;

    CheckpointSection to_section() const;
    static RetrievalEncoder from_section(const CheckpointSection& s);

private:
    RetrievalConfig cfg_;
    nn::ParamSet params_;
    Tensor conv_w[2], conv_b[2];
    nn::Linear motion_out;
    Tensor word_table;
    nn::Linear text_fc, text_out;
    std::vector<double> mean_, std_;
};

struct RetrievalPair {
    const motion::MotionSequence* motion = nullptr;
    std::vector<int> ids;
};

struct RetrievalTrainConfig {
    std::size_t epochs = 40;
    std::size_t batch = 32;
    AdamConfig adam{1e-3};
};

// Symmetric InfoNCE over in-batch pairs. Batches hold distinct token
// sequences so no duplicate caption acts as a negative. Returns mean loss per epoch.
std::vector<double> train_retrieval_encoder(RetrievalEncoder& enc, const std::vector<RetrievalPair>& pairs,
                                            const RetrievalTrainConfig& cfg, std::uint64_t seed);

// Candidates ahead of the true slot: strictly more similar ones anywhere plus
// equal ones placed earlier.
std::size_t retrieval_rank(const std::vector<double>& sims, std::size_t true_slot);

struct RetrievalScore {
    double top1 = 0.0;
    double top5 = 0.0;
    std::size_t trials = 0;
};

// motion_emb[i] is paired with text_emb[text_of[i]]; text_emb holds one row
// per distinct description. Each trial draws `distractors` other texts.
RetrievalScore retrieval_accuracy(const std::vector<std::vector<double>>& motion_emb,
                                  const std::vector<std::size_t>& text_of,
                                  const std::vector<std::vector<double>>& text_emb, std::size_t distractors,
                                  std::size_t trials_per_pair, std::uint64_t seed);

}  // namespace ude::metrics
