#include "ude/utt/train.hpp"

#include <cmath>
#include <numeric>

#include "ude/errors.hpp"

namespace ude::utt {

UTTSample make_utt_sample(const mq::MQModel& mq, const mate::ModalityInput& input, const motion::MotionSequence& m) {
    UTTSample s;
    s.input = input;
    s.tokens = mq.tokenize(m);
    s.motion = mq.normalize(m);
    return s;
}

namespace {

std::vector<std::vector<std::size_t>> interleaved_batches(const std::vector<UTTSample>& samples, std::size_t batch,
                                                          Rng& rng) {
    std::vector<std::size_t> text, audio;
    for (std::size_t i = 0; i < samples.size(); ++i)
        (samples[i].input.modality == motion::Modality::text ? text : audio).push_back(i);
    rng.shuffle(text.begin(), text.end());
    rng.shuffle(audio.begin(), audio.end());
    const auto chunk = [batch](const std::vector<std::size_t>& v) {
        std::vector<std::vector<std::size_t>> out;
        for (std::size_t i = 0; i < v.size(); i += batch)
            out.emplace_back(v.begin() + static_cast<long>(i),
                             v.begin() + static_cast<long>(std::min(v.size(), i + batch)));
        return out;
    };
    const auto tb = chunk(text);
    const auto ab = chunk(audio);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < std::max(tb.size(), ab.size()); ++i) {
        if (i < tb.size()) out.push_back(tb[i]);
        if (i < ab.size()) out.push_back(ab[i]);
    }
    return out;
}

}  // namespace

UTTTrainResult train_utt(mate::MATEModel& mate, UTTModel& utt, Discriminator& disc, mq::MQModel& mq,
                         const std::vector<UTTSample>& samples, const UTTTrainConfig& cfg, std::uint64_t seed) {
    UTTTrainResult res;
    if (cfg.epochs == 0) return res;
    if (samples.empty()) throw ContractError("train_utt needs a nonempty dataset");
    if (cfg.batch == 0) throw ConfigError("batch size must be positive");

    // MQ stays frozen for the duration.
    auto& mq_params = mq.params();
    mq_params.set_trainable(false);

    std::vector<Tensor> gen_params = mate.params().tensors();
    for (const auto& t : utt.params().tensors()) gen_params.push_back(t);
    Adam gen_opt(gen_params, cfg.adam);
    Adam disc_opt(disc.params().tensors(), cfg.disc_adam);
    Rng rng(seed);
    std::size_t step = 0;

    try {
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            double ce_sum = 0.0, adv_sum = 0.0, disc_sum = 0.0;
            std::size_t disc_n = 0;
            for (const auto& batch : interleaved_batches(samples, cfg.batch, rng)) {
                const double inv = 1.0 / static_cast<double>(batch.size());
                gen_opt.zero_grad();
                std::vector<Tensor> globs, fakes;
                for (std::size_t idx : batch) {
                    const auto& s = samples[idx];
                    std::optional<std::vector<double>> z;
                    if (rng.uniform() < cfg.z_fraction) z = rng.normal_vector(utt.config().z_dim);
                    Tape tape;
                    const auto cond = mate.encode(tape, s.input);
                    const double beta = cfg.adversarial ? cfg.beta_adv : 0.0;
                    const auto parts = utt_loss(tape, utt, disc, mq, cond, s.tokens, z, beta);
                    if (!std::isfinite(parts.total.item())) {
                        throw TrainingError("utt loss is not finite at step " + std::to_string(step));
                    }
                    ce_sum += parts.ce.item();
                    adv_sum += parts.adv.item();
                    tape.backward(tape.scale(parts.total, inv));
                    if (cfg.adversarial) {
                        globs.push_back(cond.glob.clone());
                        fakes.push_back(parts.fake_motion.clone());
                    }
                }
                gen_opt.step();
                if (cfg.adversarial) {
                    disc_opt.zero_grad();
                    for (std::size_t b = 0; b < batch.size(); ++b) {
                        Tape tape;
                        const Tensor l = disc_hinge_loss(tape, disc, globs[b], samples[batch[b]].motion, fakes[b]);
                        disc_sum += l.item();
                        ++disc_n;
                        tape.backward(tape.scale(l, inv));
                    }
                    disc_opt.step();
                }
                ++step;
            }
            res.ce_history.push_back(ce_sum / static_cast<double>(samples.size()));
            res.adv_history.push_back(adv_sum / static_cast<double>(samples.size()));
            res.disc_history.push_back(disc_n ? disc_sum / static_cast<double>(disc_n) : 0.0);
        }
    } catch (const TrainingError& e) {
        mq_params.set_trainable(true);
        const std::string msg = e.what();
        if (msg.find(" at step ") != std::string::npos) throw;
        throw TrainingError(msg + " at step " + std::to_string(step));
    } catch (...) {
        mq_params.set_trainable(true);
        throw;
    }
    mq_params.set_trainable(true);
    return res;
}

double mean_cross_entropy(const mate::MATEModel& mate, const UTTModel& utt, const std::vector<UTTSample>& samples) {
    if (samples.empty()) throw ContractError("no samples");
    double total = 0.0;
    for (const auto& s : samples) {
        Tape tape(false);
        const auto cond = mate.encode(tape, s.input);
        std::vector<int> input{utt.bos()};
        input.insert(input.end(), s.tokens.begin(), s.tokens.end());
        std::vector<int> target(s.tokens.begin(), s.tokens.end());
        target.push_back(utt.eos());
        total += tape.cross_entropy(utt.forward_logits(tape, cond, input), target).item();
    }
    return total / static_cast<double>(samples.size());
}

}  // namespace ude::utt
