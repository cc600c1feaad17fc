#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ude/cli/config.hpp"
#include "ude/metrics/metrics.hpp"
#include "ude/motion/io.hpp"

namespace ude::cli {

using mq::TokenSequence;

enum class Decoder { vq, dmd, gt };
Decoder parse_decoder(const std::string& s);
std::string to_string(Decoder d);

// MATE + UTT + discriminator trained together against one frozen MQ.
struct UnifiedModel {
    motion::Vocabulary vocab;
    mq::MQModel mq;
    mate::MATEModel mate;
    utt::UTTModel utt;
    utt::Discriminator disc;
};

std::vector<const motion::MotionSequence*> motions_of(const std::vector<const motion::Sample*>& samples);
mate::ModalityInput input_of(const motion::Sample& s);

// Stage trainers. Each draws its own stream from `seed`.
mq::MQModel train_mq_stage(const motion::Dataset& data, const RunConfig& cfg, std::uint64_t seed,
                           mq::MQTrainResult* history = nullptr);
UnifiedModel make_unified(const motion::Dataset& data, const mq::MQModel& mq, const RunConfig& cfg,
                          std::uint64_t seed);
utt::UTTTrainResult train_unified(UnifiedModel& model, const motion::Dataset& data, const RunConfig& cfg,
                                  std::uint64_t seed);
dmd::DMDModel train_dmd_stage(const motion::Dataset& data, const mq::MQModel& mq, const RunConfig& cfg,
                              std::uint64_t seed, std::vector<double>* history = nullptr);
metrics::RetrievalEncoder train_retrieval_stage(const motion::Dataset& data, const RunConfig& cfg, std::uint64_t seed,
                                                std::vector<double>* history = nullptr);

struct GenerationRequest {
    std::size_t frames = 64;  // new frames, multiple of 4
    bool use_z = false;
    std::uint64_t seed = 0;
    utt::SamplingConfig sampling;
    TokenSequence primitive;
};

// Exactly primitive.size() + frames / 4 tokens; the primitive is copied first.
TokenSequence generate_tokens(const UnifiedModel& model, const mate::ModalityInput& input,
                              const GenerationRequest& req);
motion::MotionSequence decode_tokens(const UnifiedModel& model, const dmd::DMDModel* dmd, const TokenSequence& z,
                                     Decoder decoder, std::uint64_t seed, double fps);

// Largest per-joint displacement between frames t-1 and t.
double frame_jump(const motion::MotionSequence& m, std::size_t t);
double median_frame_jump(const motion::MotionSequence& m);

struct TransitionResult {
    TokenSequence text_tokens;
    TokenSequence continuation;  // starts with the primitive
    TokenSequence combined;      // text tokens then the continuation's new tokens
    motion::MotionSequence motion;
    std::size_t boundary_frame = 0;
    double boundary_jump = 0.0;
    double median_jump = 0.0;
    bool primitive_matches = false;
};

TransitionResult run_transition(const UnifiedModel& model, const dmd::DMDModel* dmd, const std::vector<int>& text_ids,
                                const motion::AudioFeatureSequence& audio, std::size_t primitive_len,
                                std::size_t text_frames, Decoder decoder, std::uint64_t seed,
                                const utt::SamplingConfig& sampling, double fps);

struct EvalOptions {
    Decoder decoder = Decoder::vq;
    std::size_t samples_per_input = 1;
    bool use_z = false;
    std::uint64_t seed = 0;
    utt::SamplingConfig sampling;
    double sigma_frames = 3.0;
    std::size_t distractors = 60;
    std::size_t trials = 1;
    std::size_t threads = 1;
};

struct FeatureRow {
    std::string id;
    std::size_t sample = 0;
    motion::Modality modality = motion::Modality::text;
    std::vector<double> kinetic;
    std::vector<double> geometric;
};

struct EvalResult {
    nlohmann::ordered_json metrics;
    std::vector<FeatureRow> features;  // generated rows, samples_per_input per test input
};

// Generates for every test input and scores against the ground truth. With
// Decoder::gt the ground-truth motions stand in for generations and `model`
// may be null.
EvalResult evaluate(const UnifiedModel* model, const dmd::DMDModel* dmd, const metrics::RetrievalEncoder& enc,
                    const motion::Dataset& data, const EvalOptions& opt);

std::size_t thread_count_from_env();

}  // namespace ude::cli
