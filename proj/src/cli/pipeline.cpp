#include "ude/cli/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <thread>

#include "ude/errors.hpp"

namespace ude::cli {

namespace {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += threads) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

Decoder parse_decoder(const std::string& s) {
    if (s == "vq") return Decoder::vq;
    if (s == "dmd") return Decoder::dmd;
    if (s == "gt") return Decoder::gt;
    throw ConfigError("unknown decoder '" + s + "' (expected vq, dmd or gt)");
}

std::string to_string(Decoder d) {
    switch (d) {
        case Decoder::vq: return "vq";
        case Decoder::dmd: return "dmd";
        case Decoder::gt: return "gt";
    }
    return "?";
}

std::vector<const motion::MotionSequence*> motions_of(const std::vector<const motion::Sample*>& samples) {
    std::vector<const motion::MotionSequence*> out;
    out.reserve(samples.size());
    for (const auto* s : samples) out.push_back(&s->motion);
    return out;
}

mate::ModalityInput input_of(const motion::Sample& s) {
    return s.modality == motion::Modality::text ? mate::ModalityInput::text(s.text.ids)
                                                : mate::ModalityInput::from_audio(s.audio);
}

mq::MQModel train_mq_stage(const motion::Dataset& data, const RunConfig& cfg, std::uint64_t seed,
                           mq::MQTrainResult* history) {
    const auto train = data.select(motion::Split::train);
    if (train.empty()) throw ContractError("training split is empty");
    auto mc = mq_config(cfg);
    mc.channels = train.front()->motion.width();
    mq::MQModel model(mc, mix_seed(seed, 1));
    const auto res = mq::train_mq(model, motions_of(train), mq_train_config(cfg), mix_seed(seed, 2));
    if (mq_train_config(cfg).epochs == 0) model.fit_normalization(motions_of(train));
    if (history) *history = res;
    return model;
}

UnifiedModel make_unified(const motion::Dataset& data, const mq::MQModel& mq, const RunConfig& cfg,
                          std::uint64_t seed) {
    std::size_t feature_dims = 0;
    std::vector<const motion::AudioFeatureSequence*> clips;
    for (const auto* s : data.select(motion::Split::train, motion::Modality::audio)) clips.push_back(&s->audio);
    for (const auto& s : data.samples)
        if (s.modality == motion::Modality::audio) feature_dims = s.audio.dims;
    if (feature_dims == 0) feature_dims = motion::AudioFeatureConfig{}.feature_dims();
    mate::MATEModel mate(mate_config(cfg, data.vocab.size(), feature_dims), mix_seed(seed, 3));
    mate.fit_audio_normalization(clips);
    auto dc = disc_config(cfg);
    dc.channels = mq.config().channels;
    return UnifiedModel{data.vocab, mq, std::move(mate), utt::UTTModel(utt_config(cfg), mix_seed(seed, 4)),
                        utt::Discriminator(dc, mix_seed(seed, 5))};
}

utt::UTTTrainResult train_unified(UnifiedModel& model, const motion::Dataset& data, const RunConfig& cfg,
                                  std::uint64_t seed) {
    std::vector<utt::UTTSample> samples;
    for (const auto* s : data.select(motion::Split::train)) samples.push_back(utt::make_utt_sample(model.mq, input_of(*s), s->motion));
    if (samples.empty()) throw ContractError("training split is empty");
    return utt::train_utt(model.mate, model.utt, model.disc, model.mq, samples, utt_train_config(cfg),
                          mix_seed(seed, 6));
}

dmd::DMDModel train_dmd_stage(const motion::Dataset& data, const mq::MQModel& mq, const RunConfig& cfg,
                              std::uint64_t seed, std::vector<double>* history) {
    auto dc = dmd_config(cfg);
    dc.channels = mq.config().channels;
    dc.codebook_size = mq.config().codebook_size;
    dmd::DMDModel model(dc, mix_seed(seed, 7));
    std::vector<dmd::DMDSample> samples;
    for (const auto* s : data.select(motion::Split::train)) samples.push_back({mq.normalize(s->motion), mq.tokenize(s->motion)});
    if (samples.empty()) throw ContractError("training split is empty");
    const auto h = dmd::train_dmd(model, samples, dmd_train_config(cfg), mix_seed(seed, 8));
    if (history) *history = h;
    return model;
}

metrics::RetrievalEncoder train_retrieval_stage(const motion::Dataset& data, const RunConfig& cfg, std::uint64_t seed,
                                                std::vector<double>* history) {
    std::vector<metrics::RetrievalPair> pairs;
    for (const auto* s : data.select(motion::Split::train, motion::Modality::text)) pairs.push_back({&s->motion, s->text.ids});
    if (pairs.empty()) throw ContractError("retrieval training needs text samples in the training split");
    auto rc = retrieval_config(cfg, data.vocab.size());
    rc.channels = pairs.front().motion->width();
    metrics::RetrievalEncoder enc(rc, mix_seed(seed, 9));
    const auto h = metrics::train_retrieval_encoder(enc, pairs, retrieval_train_config(cfg), mix_seed(seed, 10));
    if (h.empty()) enc.fit_normalization(motions_of(data.select(motion::Split::train, motion::Modality::text)));
    if (history) *history = h;
    return enc;
}

TokenSequence generate_tokens(const UnifiedModel& model, const mate::ModalityInput& input,
                              const GenerationRequest& req) {
    if (req.frames == 0 || req.frames % mq::kDownsample != 0) {
        throw ContractError("target frames must be a positive multiple of " + std::to_string(mq::kDownsample));
    }
    Tape tape(false);
    const auto cond = model.mate.encode(tape, input);
    utt::GenerateOptions o;
    o.max_len = req.primitive.size() + req.frames / mq::kDownsample;
    o.min_len = o.max_len;
    o.sampling = req.sampling;
    o.primitive = req.primitive;
    o.seed = mix_seed(req.seed, 11);
    if (req.use_z) {
        Rng zr(mix_seed(req.seed, 12));
        o.z = zr.normal_vector(model.utt.config().z_dim);
    }
    return utt::generate_tokens(model.utt, cond, o);
}

motion::MotionSequence decode_tokens(const UnifiedModel& model, const dmd::DMDModel* dmd, const TokenSequence& z,
                                     Decoder decoder, std::uint64_t seed, double fps) {
    switch (decoder) {
        case Decoder::vq:
            return model.mq.decode_tokens(z, fps);
        case Decoder::dmd:
            if (!dmd) throw DependencyError("requires stage dmd (no diffusion decoder loaded)");
            return model.mq.denormalize(dmd->sample(z, mix_seed(seed, 13)), fps);
        case Decoder::gt:
            break;
    }
    throw ContractError("the gt decoder cannot decode tokens");
}

double frame_jump(const motion::MotionSequence& m, std::size_t t) {
    if (t == 0 || t >= m.length()) throw ContractError("frame_jump needs 0 < t < T");
    double best = 0.0;
    for (std::size_t j = 0; j < m.joints; ++j) best = std::max(best, (m.joint(t, j) - m.joint(t - 1, j)).norm());
    return best;
}

double median_frame_jump(const motion::MotionSequence& m) {
    if (m.length() < 2) throw ContractError("median_frame_jump needs two frames");
    std::vector<double> d;
    for (std::size_t t = 1; t < m.length(); ++t) d.push_back(frame_jump(m, t));
    std::sort(d.begin(), d.end());
    const std::size_t n = d.size();
    return n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

TransitionResult run_transition(const UnifiedModel& model, const dmd::DMDModel* dmd, const std::vector<int>& text_ids,
                                const motion::AudioFeatureSequence& audio, std::size_t primitive_len,
                                std::size_t text_frames, Decoder decoder, std::uint64_t seed,
                                const utt::SamplingConfig& sampling, double fps) {
    if (decoder == Decoder::gt) throw ConfigError("transition needs the vq or dmd decoder");
    TransitionResult r;
    GenerationRequest a;
    a.frames = text_frames;
    a.seed = mix_seed(seed, 21);
    a.sampling = sampling;
    r.text_tokens = generate_tokens(model, mate::ModalityInput::text(text_ids), a);
    if (r.text_tokens.size() < primitive_len) {
        throw ContractError("text segment has " + std::to_string(r.text_tokens.size()) +
                            " tokens, fewer than primitive_len " + std::to_string(primitive_len));
    }
    GenerationRequest b;
    b.frames = audio.length() / mq::kDownsample * mq::kDownsample;
    b.seed = mix_seed(seed, 22);
    b.sampling = sampling;
    b.primitive.assign(r.text_tokens.end() - static_cast<long>(primitive_len), r.text_tokens.end());
    r.continuation = generate_tokens(model, mate::ModalityInput::from_audio(audio), b);
    r.primitive_matches = std::equal(b.primitive.begin(), b.primitive.end(), r.continuation.begin());
    r.combined = r.text_tokens;
    r.combined.insert(r.combined.end(), r.continuation.begin() + static_cast<long>(primitive_len), r.continuation.end());
    r.motion = decode_tokens(model, dmd, r.combined, decoder, mix_seed(seed, 23), fps);
    r.boundary_frame = r.text_tokens.size() * mq::kDownsample;
    r.boundary_jump = frame_jump(r.motion, r.boundary_frame);
    r.median_jump = median_frame_jump(r.motion);
    return r;
}

EvalResult evaluate(const UnifiedModel* model, const dmd::DMDModel* dmd, const metrics::RetrievalEncoder& enc,
                    const motion::Dataset& data, const EvalOptions& opt) {
    const auto test = data.select(motion::Split::test);
    if (test.empty()) throw MetricError("test split is empty");
    if (opt.samples_per_input == 0) throw ConfigError("samples_per_input must be positive");
    if (opt.decoder != Decoder::gt && !model) throw DependencyError("requires stage utt (no unified model loaded)");
    const std::size_t per = opt.samples_per_input;
    const std::size_t n = test.size() * per;

    std::vector<motion::MotionSequence> gen(n);
    parallel_for(n, opt.threads, [&](std::size_t k) {
        const auto& s = *test[k / per];
        const std::uint64_t sd = mix_seed(mix_seed(opt.seed, k / per), k % per);
        if (opt.decoder == Decoder::gt) {
            gen[k] = s.motion;
            return;
        }
        GenerationRequest req;
        req.frames = s.motion.length();
        req.use_z = opt.use_z;
        req.seed = sd;
        req.sampling = opt.sampling;
        gen[k] = decode_tokens(*model, dmd, generate_tokens(*model, input_of(s), req), opt.decoder, sd, s.motion.fps);
    });

    EvalResult res;
    metrics::FeatureSet gk, gm, rk, rm;
    gk.kind = rk.kind = metrics::FeatureKind::kinetic;
    gm.kind = rm.kind = metrics::FeatureKind::geometric;
    for (const auto* s : test) {
        rk.add(metrics::kinetic_features(s->motion));
        rm.add(metrics::geometric_features(s->motion));
    }
    std::vector<double> ape, ave, ape_r, ave_r;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& s = *test[k / per];
        FeatureRow row{s.id, k % per, s.modality, metrics::kinetic_features(gen[k]), metrics::geometric_features(gen[k])};
        gk.add(row.kinetic);
        gm.add(row.geometric);
        res.features.push_back(std::move(row));
        const auto r = metrics::recon_accuracy(gen[k], s.motion);
        ape.push_back(r.ape);
        ave.push_back(r.ave);
        ape_r.push_back(r.ape_root);
        ave_r.push_back(r.ave_root);
    }

    // Text retrieval over the distinct test descriptions.
    std::map<std::string, std::size_t> text_index;
    std::vector<std::vector<double>> text_emb;
    std::vector<std::vector<double>> motion_emb;
    std::vector<std::size_t> text_of;
    std::size_t text_inputs = 0, audio_inputs = 0;
    for (const auto* s : test) (s->modality == motion::Modality::text ? text_inputs : audio_inputs)++;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& s = *test[k / per];
        if (s.modality != motion::Modality::text) continue;
        const auto [it, fresh] = text_index.emplace(s.text.raw, text_emb.size());
        if (fresh) text_emb.push_back(enc.text_embedding(s.text.ids));
        text_of.push_back(it->second);
        motion_emb.push_back(enc.motion_embedding(gen[k]));
    }
    nlohmann::ordered_json retrieval = nullptr;
    if (!motion_emb.empty()) {
        const auto r = metrics::retrieval_accuracy(motion_emb, text_of, text_emb, opt.distractors, opt.trials,
                                                   mix_seed(opt.seed, 31));
        retrieval = {{"top1", r.top1}, {"top5", r.top5}, {"distinct_texts", text_emb.size()}, {"trials", r.trials}};
    }

    // Beat alignment over annotated audio inputs.
    std::vector<double> ba, ba_gt;
    double fps = test.front()->motion.fps;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& s = *test[k / per];
        if (s.modality != motion::Modality::audio || !s.audio.beat_times || s.audio.beat_times->empty()) continue;
        const double sigma = opt.sigma_frames / s.motion.fps;
        ba.push_back(metrics::beat_align(metrics::detect_motion_beats(gen[k]), *s.audio.beat_times, sigma));
        if (k % per == 0) ba_gt.push_back(metrics::beat_align(metrics::detect_motion_beats(s.motion), *s.audio.beat_times, sigma));
    }

    auto& m = res.metrics;
    m["decoder"] = to_string(opt.decoder);
    m["samples_per_input"] = per;
    m["use_z"] = opt.use_z;
    m["seed"] = opt.seed;
    m["counts"] = {{"inputs", test.size()}, {"text_inputs", text_inputs}, {"audio_inputs", audio_inputs}, {"generated", n}};
    m["FID_k"] = metrics::fid(gk, rk);
    m["FID_m"] = metrics::fid(gm, rm);
    m["Div_k"] = n >= 2 ? nlohmann::ordered_json(metrics::diversity(gk)) : nlohmann::ordered_json(nullptr);
    m["Div_m"] = n >= 2 ? nlohmann::ordered_json(metrics::diversity(gm)) : nlohmann::ordered_json(nullptr);
    m["retrieval"] = retrieval;
    m["beat_align"] = ba.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(mean_of(ba));
    m["beat_align_gt"] = ba_gt.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(mean_of(ba_gt));
    m["beat_sigma_seconds"] = opt.sigma_frames / fps;
    m["APE"] = mean_of(ape);
    m["AVE"] = mean_of(ave);
    m["APE_root"] = mean_of(ape_r);
    m["AVE_root"] = mean_of(ave_r);
    return res;
}

std::size_t thread_count_from_env() {
    const char* v = std::getenv("UDE_THREADS");
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    if (!v || !*v) return hw;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError(std::string("UDE_THREADS must be a positive integer, got '") + v + "'");
    return static_cast<std::size_t>(n);
}

}  // namespace ude::cli
