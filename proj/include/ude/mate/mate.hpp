#pragma once

#include <cstdint>
#include <vector>

#include "ude/checkpoint.hpp"
#include "ude/motion/types.hpp"
#include "ude/numerics/nn.hpp"

namespace ude::mate {

using motion::Modality;

struct MATEConfig {
    std::size_t vocab_size = 64;
    std::size_t feature_dims = 17;
    std::size_t dim = 64;      // paper scale uses 6 layers, 8 heads, hidden 1024
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t hidden = 128;
    std::size_t max_text = 77;
    std::size_t max_audio = 256;
};

struct ModalityInput {
    Modality modality = Modality::text;
    std::vector<int> ids;                 // text
    motion::AudioFeatureSequence audio;   // audio

    static ModalityInput text(std::vector<int> ids);
    static ModalityInput from_audio(motion::AudioFeatureSequence a);
    std::size_t length() const;
};

struct CondEmbedding {
    Tensor glob;  // 1 x D
    Tensor seq;   // I x D
    Modality modality = Modality::text;
};

class MATEModel {
public:
    MATEModel(const MATEConfig& cfg, std::uint64_t seed);

    const MATEConfig& config() const { return cfg_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    // Standardizes audio columns with statistics from training clips.
    void fit_audio_normalization(const std::vector<const motion::AudioFeatureSequence*>& clips);

    Tensor embed_modality(Tape& tape, const ModalityInput& inp) const;                  // I x D
    Tensor assemble_sequence(Tape& tape, const Tensor& raw, Modality modality) const;   // (I+1) x D
    CondEmbedding encode(Tape& tape, const ModalityInput& inp) const;

    // Exposed so tests can switch Eq. 3 additions off.
    bool use_positional = true;

    Tensor modality_token(Modality m) const { return m == Modality::text ? tok_text_ : tok_audio_; }
    Tensor aggregation_token(Modality m) const { return m == Modality::text ? agg_text_ : agg_audio_; }
    Tensor text_table() const { return text_table_; }
    const nn::Linear& audio_projection() const { return audio_proj_; }
    const Tensor& positions() const { return pos_; }

    CheckpointSection to_section() const;
    static MATEModel from_section(const CheckpointSection& s);

private:
    MATEConfig cfg_;
    nn::ParamSet params_;
    Tensor text_table_;
    nn::Linear audio_proj_;
    Tensor tok_text_, tok_audio_, agg_text_, agg_audio_;
    nn::TransformerStack stack_;
    Tensor pos_;
    std::vector<double> audio_mean_, audio_std_;
};

}  // namespace ude::mate
