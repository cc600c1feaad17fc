#include "ude/mate/mate.hpp"

#include <algorithm>
#include <cmath>

#include "ude/errors.hpp"

namespace ude::mate {

ModalityInput ModalityInput::text(std::vector<int> ids) {
    ModalityInput in;
    in.modality = Modality::text;
    in.ids = std::move(ids);
    return in;
}

ModalityInput ModalityInput::from_audio(motion::AudioFeatureSequence a) {
    ModalityInput in;
    in.modality = Modality::audio;
    in.audio = std::move(a);
    return in;
}

std::size_t ModalityInput::length() const { return modality == Modality::text ? ids.size() : audio.length(); }

MATEModel::MATEModel(const MATEConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.vocab_size == 0 || cfg.feature_dims == 0 || cfg.dim == 0) throw ConfigError("MATE sizes must be positive");
    Rng rng(seed);
    text_table_ = params_.add_normal("text_table", {cfg.vocab_size, cfg.dim}, 1.0, rng);
    audio_proj_ = nn::Linear(params_, "audio_proj", cfg.feature_dims, cfg.dim, rng);
    tok_text_ = params_.add_normal("token.text", {cfg.dim}, 0.1, rng);
    tok_audio_ = params_.add_normal("token.audio", {cfg.dim}, 0.1, rng);
    agg_text_ = params_.add_normal("agg.text", {cfg.dim}, 0.1, rng);
    agg_audio_ = params_.add_normal("agg.audio", {cfg.dim}, 0.1, rng);
    stack_ = nn::TransformerStack(params_, "encoder", cfg.layers, cfg.dim, cfg.heads, cfg.hidden, rng);
    pos_ = nn::sinusoidal_table(std::max(cfg.max_text, cfg.max_audio) + 1, cfg.dim);
    audio_mean_.assign(cfg.feature_dims, 0.0);
    audio_std_.assign(cfg.feature_dims, 1.0);
}

void MATEModel::fit_audio_normalization(const std::vector<const motion::AudioFeatureSequence*>& clips) {
    const std::size_t f = cfg_.feature_dims;
    std::vector<double> s(f, 0.0), sq(f, 0.0);
    double n = 0.0;
    for (const auto* a : clips) {
        if (a->dims != f) throw DimensionError("audio feature width does not match MATE projection");
        for (std::size_t t = 0; t < a->length(); ++t) {
            const auto r = a->row(t);
            for (std::size_t j = 0; j < f; ++j) {
                s[j] += r[j];
                sq[j] += r[j] * r[j];
            }
        }
        n += static_cast<double>(a->length());
    }
    if (n == 0.0) return;
    for (std::size_t j = 0; j < f; ++j) {
        audio_mean_[j] = s[j] / n;
        audio_std_[j] = std::max(std::sqrt(std::max(sq[j] / n - audio_mean_[j] * audio_mean_[j], 0.0)), 1e-6);
    }
}

Tensor MATEModel::embed_modality(Tape& tape, const ModalityInput& inp) const {
    switch (inp.modality) {
        case Modality::text: {
            if (inp.ids.size() > cfg_.max_text) {
                throw LengthError("text of " + std::to_string(inp.ids.size()) + " tokens exceeds limit " +
                                  std::to_string(cfg_.max_text));
            }
            if (inp.ids.empty()) return Tensor::zeros({0, cfg_.dim});
            return tape.gather_rows(text_table_, inp.ids);
        }
        case Modality::audio: {
            const auto& a = inp.audio;
            if (a.dims != cfg_.feature_dims) {
                throw DimensionError("audio has " + std::to_string(a.dims) + " feature columns, projection expects " +
                                     std::to_string(cfg_.feature_dims));
            }
            if (a.length() > cfg_.max_audio) {
                throw LengthError("audio of " + std::to_string(a.length()) + " frames exceeds limit " +
                                  std::to_string(cfg_.max_audio));
            }
            if (a.length() == 0) return Tensor::zeros({0, cfg_.dim});
            std::vector<double> v(a.features.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                const std::size_t j = i % a.dims;
                v[i] = (a.features[i] - audio_mean_[j]) / audio_std_[j];
            }
            return audio_proj_.forward(tape, Tensor::matrix(a.length(), a.dims, std::move(v)));
        }
    }
    throw ContractError("unknown modality tag");
}

Tensor MATEModel::assemble_sequence(Tape& tape, const Tensor& raw, Modality modality) const {
    if (modality != Modality::text && modality != Modality::audio) throw ContractError("unknown modality tag");
    const std::size_t i_len = raw.rank() == 2 ? raw.rows() : 0;
    if (i_len + 1 > pos_.rows()) throw LengthError("condition longer than the positional table");
    Tensor agg = tape.reshape(aggregation_token(modality), {1, cfg_.dim});
    if (use_positional) agg = tape.add(agg, tape.slice_rows(pos_, 0, 1));
    if (i_len == 0) return agg;
    Tensor body = tape.add_row(raw, modality_token(modality));
    if (use_positional) body = tape.add(body, tape.slice_rows(pos_, 1, i_len));
    return tape.concat_rows({agg, body});
}

CondEmbedding MATEModel::encode(Tape& tape, const ModalityInput& inp) const {
    const Tensor seq = assemble_sequence(tape, embed_modality(tape, inp), inp.modality);
    const Tensor out = stack_.forward(tape, seq, nullptr);
    CondEmbedding c;
    c.modality = inp.modality;
    c.glob = tape.slice_rows(out, 0, 1);
    c.seq = out.rows() > 1 ? tape.slice_rows(out, 1, out.rows() - 1) : Tensor::zeros({0, cfg_.dim});
    return c;
}

CheckpointSection MATEModel::to_section() const {
    CheckpointSection s;
    s.module = "mate";
    s.body["hyper"] = {{"vocab_size", cfg_.vocab_size}, {"feature_dims", cfg_.feature_dims}, {"dim", cfg_.dim},
                       {"layers", cfg_.layers},         {"heads", cfg_.heads},               {"hidden", cfg_.hidden},
                       {"max_text", cfg_.max_text},     {"max_audio", cfg_.max_audio}};
    s.body["audio_norm"] = {{"mean", audio_mean_}, {"std", audio_std_}};
    s.body["params"] = params_to_json(params_);
    return s;
}

MATEModel MATEModel::from_section(const CheckpointSection& s) {
    if (s.module != "mate") throw FormatError("expected module=mate, found module=" + s.module);
    try {
        const auto& h = s.body.at("hyper");
        MATEConfig cfg;
        cfg.vocab_size = h.at("vocab_size").get<std::size_t>();
        cfg.feature_dims = h.at("feature_dims").get<std::size_t>();
        cfg.dim = h.at("dim").get<std::size_t>();
        cfg.layers = h.at("layers").get<std::size_t>();
        cfg.heads = h.at("heads").get<std::size_t>();
        cfg.hidden = h.at("hidden").get<std::size_t>();
        cfg.max_text = h.at("max_text").get<std::size_t>();
        cfg.max_audio = h.at("max_audio").get<std::size_t>();
        MATEModel m(cfg, 0);
        params_from_json(m.params_, s.body.at("params"));
        m.audio_mean_ = s.body.at("audio_norm").at("mean").get<std::vector<double>>();
        m.audio_std_ = s.body.at("audio_norm").at("std").get<std::vector<double>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed mate section: ") + e.what());
    }
}

}  // namespace ude::mate
