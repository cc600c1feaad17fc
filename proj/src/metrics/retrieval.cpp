#include "ude/metrics/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ude/errors.hpp"

namespace ude::metrics {

namespace {

Tensor conv_kernel(nn::ParamSet& ps, const std::string& name, std::size_t w, std::size_t cin, std::size_t cout,
                   Rng& rng) {
    return ps.add_xavier(name, {w, cin, cout}, w * cin, w * cout, rng);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

RetrievalEncoder::RetrievalEncoder(const RetrievalConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.channels == 0 || cfg.vocab_size == 0 || cfg.hidden == 0 || cfg.dim == 0) {
        throw ConfigError("retrieval encoder sizes must be positive");
    }
    if (!(cfg.temperature > 0.0)) throw ConfigError("retrieval temperature must be positive");
    Rng rng(seed);
    conv_w[0] = conv_kernel(params_, "motion.conv0", 4, cfg.channels, cfg.hidden, rng);
    conv_b[0] = params_.add_zeros("motion.conv0.b", {cfg.hidden});
    conv_w[1] = conv_kernel(params_, "motion.conv1", 4, cfg.hidden, cfg.hidden, rng);
    conv_b[1] = params_.add_zeros("motion.conv1.b", {cfg.hidden});
    motion_out = nn::Linear(params_, "motion.out", 2 * cfg.hidden, cfg.dim, rng);
    word_table = params_.add_normal("text.table", {cfg.vocab_size, cfg.hidden}, 1.0, rng);
    text_fc = nn::Linear(params_, "text.fc", cfg.hidden, cfg.hidden, rng);
    text_out = nn::Linear(params_, "text.out", cfg.hidden, cfg.dim, rng);
    mean_.assign(cfg.channels, 0.0);
    std_.assign(cfg.channels, 1.0);
}

void RetrievalEncoder::fit_normalization(const std::vector<const motion::MotionSequence*>& data) {
    const std::size_t c = cfg_.channels;
    std::vector<double> s(c, 0.0), sq(c, 0.0);
    double n = 0.0;
    for (const auto* m : data) {
        if (m->width() != c) throw DimensionError("motion width does not match retrieval channels");
        for (std::size_t t = 0; t < m->length(); ++t) {
            const auto f = m->frame(t);
            for (std::size_t j = 0; j < c; ++j) {
                s[j] += f[j];
                sq[j] += f[j] * f[j];
            }
        }
        n += static_cast<double>(m->length());
    }
    if (n == 0.0) return;
    for (std::size_t j = 0; j < c; ++j) {
        mean_[j] = s[j] / n;
        std_[j] = std::max(std::sqrt(std::max(sq[j] / n - mean_[j] * mean_[j], 0.0)), 1e-3);
    }
}

Tensor RetrievalEncoder::embed_motion(Tape& tape, const motion::MotionSequence& m) const {
    const std::size_t c = cfg_.channels;
    if (m.width() != c) throw DimensionError("motion width does not match retrieval channels");
    if (m.length() < 4) throw DimensionError("retrieval encoder needs at least 4 frames");
    std::vector<double> v(m.frames.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (m.frames[i] - mean_[i % c]) / std_[i % c];
    Tensor h = Tensor::matrix(m.length(), c, std::move(v));
    h = tape.relu(tape.add_row(tape.conv1d(h, conv_w[0], 2, 1), conv_b[0]));
    h = tape.relu(tape.add_row(tape.conv1d(h, conv_w[1], 2, 1), conv_b[1]));
    const Tensor pooled = tape.concat_cols({tape.mean_rows(h), tape.max_rows(h)});
    return tape.l2_normalize_rows(motion_out.forward(tape, pooled));
}

Tensor RetrievalEncoder::embed_text(Tape& tape, const std::vector<int>& ids) const {
    if (ids.empty()) throw ContractError("retrieval text has no tokens");
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) throw TokenError("word id out of range");
    Tensor h = tape.mean_rows(tape.gather_rows(word_table, ids));
    h = tape.relu(text_fc.forward(tape, h));
    return tape.l2_normalize_rows(text_out.forward(tape, h));
}

std::vector<double> RetrievalEncoder::motion_embedding(const motion::MotionSequence& m) const {
    Tape tape(false);
    const Tensor e = embed_motion(tape, m);
    return {e.values().begin(), e.values().end()};
}

std::vector<double> RetrievalEncoder::text_embedding(const std::vector<int>& ids) const {
    Tape tape(false);
    const Tensor e = embed_text(tape, ids);
    return {e.values().begin(), e.values().end()};
}

CheckpointSection RetrievalEncoder::to_section() const {
    CheckpointSection s;
    s.module = "retrieval";
    s.body["hyper"] = {{"channels", cfg_.channels},
                       {"vocab_size", cfg_.vocab_size},
                       {"hidden", cfg_.hidden},
                       {"dim", cfg_.dim},
                       {"temperature", cfg_.temperature}};
    s.body["norm"] = {{"mean", mean_}, {"std", std_}};
    s.body["params"] = params_to_json(params_);
    return s;
}

RetrievalEncoder RetrievalEncoder::from_section(const CheckpointSection& s) {
    if (s.module != "retrieval") throw FormatError("expected module=retrieval, found module=" + s.module);
    try {
        const auto& h = s.body.at("hyper");
        RetrievalConfig cfg;
        cfg.channels = h.at("channels").get<std::size_t>();
        cfg.vocab_size = h.at("vocab_size").get<std::size_t>();
        cfg.hidden = h.at("hidden").get<std::size_t>();
        cfg.dim = h.at("dim").get<std::size_t>();
        cfg.temperature = h.at("temperature").get<double>();
        RetrievalEncoder enc(cfg, 0);
        params_from_json(enc.params_, s.body.at("params"));
        enc.mean_ = s.body.at("norm").at("mean").get<std::vector<double>>();
        enc.std_ = s.body.at("norm").at("std").get<std::vector<double>>();
        if (enc.mean_.size() != cfg.channels || enc.std_.size() != cfg.channels) {
            throw FormatError("normalization size mismatch");
        }
        return enc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed retrieval section: ") + e.what());
    }
}

std::vector<double> train_retrieval_encoder(RetrievalEncoder& enc, const std::vector<RetrievalPair>& pairs,
                                            const RetrievalTrainConfig& cfg, std::uint64_t seed) {
    std::vector<double> history;
    if (cfg.epochs == 0) return history;
    if (pairs.empty()) throw ContractError("retrieval training needs text-motion pairs");
    if (cfg.batch < 2) throw ConfigError("retrieval batch must hold at least 2 pairs");

    std::vector<const motion::MotionSequence*> ms;
    for (const auto& p : pairs) ms.push_back(p.motion);
    enc.fit_normalization(ms);

    Rng rng(seed);
    Adam opt(enc.params().tensors(), cfg.adam);
    const double inv_tau = 1.0 / enc.config().temperature;
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        std::vector<bool> used(pairs.size(), false);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); ++start) {
            if (used[order[start]]) continue;
            // Greedy fill with captions not yet in the batch.
            std::vector<std::size_t> batch;
            std::set<std::vector<int>> seen;
            for (std::size_t k = start; k < order.size() && batch.size() < cfg.batch; ++k) {
                const std::size_t i = order[k];
                if (used[i] || seen.count(pairs[i].ids)) continue;
                seen.insert(pairs[i].ids);
                batch.push_back(i);
                used[i] = true;
            }
            if (batch.size() < 2) continue;
            Tape tape;
            std::vector<Tensor> mrows, trows;
            for (std::size_t i : batch) {
                mrows.push_back(enc.embed_motion(tape, *pairs[i].motion));
                trows.push_back(enc.embed_text(tape, pairs[i].ids));
            }
            const Tensor logits = tape.scale(tape.matmul_nt(tape.concat_rows(mrows), tape.concat_rows(trows)), inv_tau);
            std::vector<int> diag(batch.size());
            std::iota(diag.begin(), diag.end(), 0);
            const Tensor loss = tape.scale(
                tape.add(tape.cross_entropy(logits, diag), tape.cross_entropy(tape.transpose(logits), diag)), 0.5);
            if (!std::isfinite(loss.item())) {
                throw TrainingError("retrieval loss is not finite at epoch " + std::to_string(epoch));
            }
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
            loss_sum += loss.item();
            ++batches;
        }
        history.push_back(batches == 0 ? 0.0 : loss_sum / static_cast<double>(batches));
    }
    return history;
}

std::size_t retrieval_rank(const std::vector<double>& sims, std::size_t true_slot) {
    if (true_slot >= sims.size()) throw ContractError("true slot outside candidate list");
    const double s = sims[true_slot];
    std::size_t rank = 0;
    for (std::size_t c = 0; c < sims.size(); ++c) {
        if (c == true_slot) continue;
        if (sims[c] > s || (sims[c] == s && c < true_slot)) ++rank;
    }
    return rank;
}

RetrievalScore retrieval_accuracy(const std::vector<std::vector<double>>& motion_emb,
                                  const std::vector<std::size_t>& text_of,
                                  const std::vector<std::vector<double>>& text_emb, std::size_t distractors,
                                  std::size_t trials_per_pair, std::uint64_t seed) {
    if (motion_emb.size() != text_of.size()) throw DimensionError("retrieval: motion/text pairing size mismatch");
    if (motion_emb.empty() || trials_per_pair == 0) throw MetricError("retrieval: no trials");
    if (text_emb.size() < distractors + 1) {
        throw MetricError("retrieval needs " + std::to_string(distractors + 1) + " distinct texts, have " +
                          std::to_string(text_emb.size()));
    }
    Rng rng(seed);
    std::vector<std::size_t> others;
    std::size_t hit1 = 0, hit5 = 0, n = 0;
    for (std::size_t i = 0; i < motion_emb.size(); ++i) {
        const std::size_t truth = text_of[i];
        if (truth >= text_emb.size()) throw ContractError("retrieval: text index out of range");
        others.clear();
        for (std::size_t k = 0; k < text_emb.size(); ++k)
            if (k != truth) others.push_back(k);
        for (std::size_t trial = 0; trial < trials_per_pair; ++trial) {
            // Partial Fisher-Yates for the distractor draw.
            for (std::size_t k = 0; k < distractors; ++k) std::swap(others[k], others[k + rng.index(others.size() - k)]);
            const std::size_t slot = rng.index(distractors + 1);
            std::vector<double> sims;
            sims.reserve(distractors + 1);
            for (std::size_t k = 0, d = 0; k <= distractors; ++k) {
                const std::size_t cand = k == slot ? truth : others[d++];
                sims.push_back(dot(motion_emb[i], text_emb[cand]));
            }
            const std::size_t r = retrieval_rank(sims, slot);
            hit1 += r < 1;
            hit5 += r < 5;
            ++n;
        }
    }
    return {static_cast<double>(hit1) / static_cast<double>(n), static_cast<double>(hit5) / static_cast<double>(n), n};
}

}  // namespace ude::metrics
