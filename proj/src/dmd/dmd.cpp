#include "ude/dmd/dmd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ude/errors.hpp"

namespace ude::dmd {

NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) throw ConfigError("diffusion steps must be positive");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ConfigError("beta range must satisfy 0 < start <= end < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        s.beta[i] = beta_start + (beta_end - beta_start) * f;
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

NoiseSchedule default_schedule(std::size_t steps) {
    if (steps == 0) throw ConfigError("diffusion steps must be positive");
    const double scale = 1000.0 / static_cast<double>(steps);
    return make_schedule(steps, std::min(1e-4 * scale, 0.5), std::min(0.02 * scale, 0.999));
}

std::vector<double> q_sample(const NoiseSchedule& s, std::span<const double> x0, std::size_t t,
                             std::span<const double> eps) {
    if (t < 1 || t > s.steps) throw ContractError("diffusion step " + std::to_string(t) + " outside [1, " +
                                                  std::to_string(s.steps) + "]");
    if (x0.size() != eps.size()) throw DimensionError("q_sample: noise shape differs from x0");
    const double a = std::sqrt(s.alpha_bar_at(t));
    const double b = std::sqrt(1.0 - s.alpha_bar_at(t));
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

std::vector<double> reverse_from(const NoiseSchedule& s, std::vector<double> x, const NoisePredictor& eps_hat,
                                 Rng& rng, bool deterministic_tail, double clip_x0) {
    for (std::size_t t = s.steps; t >= 1; --t) {
        const auto e = eps_hat(t, x);
        if (e.size() != x.size()) throw DimensionError("noise prediction has the wrong size");
        const double sigma = std::sqrt(s.beta_at(t));
        const bool noise = !(t == 1 && deterministic_tail);
        if (clip_x0 > 0.0) {
            const double ab = s.alpha_bar_at(t);
            const double ab_prev = t > 1 ? s.alpha_bar_at(t - 1) : 1.0;
            const double c0 = std::sqrt(ab_prev) * s.beta_at(t) / (1.0 - ab);
            const double ct = std::sqrt(s.alpha_at(t)) * (1.0 - ab_prev) / (1.0 - ab);
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double x0 = std::clamp((x[i] - std::sqrt(1.0 - ab) * e[i]) / std::sqrt(ab), -clip_x0, clip_x0);
                x[i] = c0 * x0 + ct * x[i];
                if (noise) x[i] += sigma * rng.normal();
            }
            continue;
        }
        const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(t));
        const double coef = s.beta_at(t) / std::sqrt(1.0 - s.alpha_bar_at(t));
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = inv_sqrt_alpha * (x[i] - coef * e[i]);
            if (noise) x[i] += sigma * rng.normal();
        }
    }
    return x;
}

std::vector<double> sample_reverse(const NoiseSchedule& s, std::size_t size, const NoisePredictor& eps_hat, Rng& rng,
                                   bool deterministic_tail, double clip_x0) {
    return reverse_from(s, rng.normal_vector(size), eps_hat, rng, deterministic_tail, clip_x0);
}

DMDModel::DMDModel(const DMDConfig& cfg, std::uint64_t seed) : cfg_(cfg), sched_(default_schedule(cfg.steps)) {
    if (cfg.channels == 0 || cfg.codebook_size < 2 || cfg.dim == 0) throw ConfigError("invalid DMD sizes");
    Rng rng(seed);
    token_table_ = params_.add_normal("token_table", {cfg.codebook_size, cfg.dim}, 1.0, rng);
    cond_stack_ = nn::TransformerStack(params_, "cond", cfg.enc_layers, cfg.dim, cfg.heads, cfg.hidden, rng);
    in_proj_ = nn::Linear(params_, "in_proj", cfg.channels, cfg.dim, rng);
    const Tensor init = nn::sinusoidal_table(cfg.steps + 1, cfg.dim);
    emb_t_ = params_.add("emb_t", {cfg.steps + 1, cfg.dim}, init.to_vector());
    dec_stack_ = nn::TransformerStack(params_, "eps", cfg.dec_layers, cfg.dim, cfg.heads, cfg.hidden, rng);
    out_proj_ = nn::Linear(params_, "out_proj", cfg.dim, cfg.channels, rng);
    pos_ = nn::sinusoidal_table(std::max(cfg.max_frames, cfg.max_frames / mq::kDownsample + 1), cfg.dim);
}

Tensor DMDModel::encode_tokens(Tape& tape, const TokenSequence& z) const {
    if (z.empty()) throw ContractError("cannot encode an empty token sequence");
    if (z.size() > pos_.rows()) throw LengthError("token sequence longer than the positional table");
    for (int id : z) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg_.codebook_size) throw TokenError("token out of range");
    }
    const Tensor x = tape.add(tape.gather_rows(token_table_, z), tape.slice_rows(pos_, 0, z.size()));
    return cond_stack_.forward(tape, x, nullptr);
}

Tensor DMDModel::encode_condition(Tape& tape, const TokenSequence& z) const {
    return tape.max_rows(encode_tokens(tape, z));
}

Tensor DMDModel::predict_noise(Tape& tape, const Tensor& cond, std::size_t t, const Tensor& x_t) const {
    if (t < 1 || t > cfg_.steps) throw ContractError("diffusion step out of range");
    if (x_t.rank() != 2 || x_t.cols() != cfg_.channels) throw DimensionError("x_t must be T x channels");
    if (x_t.rows() > pos_.rows()) throw LengthError("too many frames for the positional table");
    const std::vector<int> ti{static_cast<int>(t)};
    const Tensor c = tape.add(tape.reshape(cond, {1, cfg_.dim}), tape.gather_rows(emb_t_, ti));
    Tensor h = tape.add(in_proj_.forward(tape, x_t), tape.slice_rows(pos_, 0, x_t.rows()));
    h = tape.add_row(h, tape.reshape(c, {cfg_.dim}));
    return out_proj_.forward(tape, dec_stack_.forward(tape, h, nullptr));
}

Tensor DMDModel::sample(const TokenSequence& z, std::uint64_t seed, std::size_t frames, bool deterministic_tail) const {
    const std::size_t n = frames ? frames : z.size() * mq::kDownsample;
    if (n == 0) throw ContractError("sample needs at least one frame");
    Tape tape(false);
    const Tensor cond = encode_condition(tape, z);
    Rng rng(seed);
    const NoisePredictor pred = [&](std::size_t t, const std::vector<double>& x) {
        Tape inner(false);
        return predict_noise(inner, cond, t, Tensor::matrix(n, cfg_.channels, x)).to_vector();
    };
    return Tensor::matrix(n, cfg_.channels, sample_reverse(sched_, n * cfg_.channels, pred, rng, deterministic_tail, cfg_.clip_x0));
}

CheckpointSection DMDModel::to_section() const {
    CheckpointSection s;
    s.module = "dmd";
    s.body["hyper"] = {{"channels", cfg_.channels}, {"codebook_size", cfg_.codebook_size},
                       {"dim", cfg_.dim},           {"enc_layers", cfg_.enc_layers},
                       {"dec_layers", cfg_.dec_layers}, {"heads", cfg_.heads},
                       {"hidden", cfg_.hidden},     {"steps", cfg_.steps},
                       {"max_frames", cfg_.max_frames}, {"clip_x0", cfg_.clip_x0}};
    s.body["params"] = params_to_json(params_);
    return s;
}

DMDModel DMDModel::from_section(const CheckpointSection& s) {
    if (s.module != "dmd") throw FormatError("expected module=dmd, found module=" + s.module);
    try {
        const auto& h = s.body.at("hyper");
        DMDConfig cfg;
        cfg.channels = h.at("channels").get<std::size_t>();
        cfg.codebook_size = h.at("codebook_size").get<std::size_t>();
        cfg.dim = h.at("dim").get<std::size_t>();
        cfg.enc_layers = h.at("enc_layers").get<std::size_t>();
        cfg.dec_layers = h.at("dec_layers").get<std::size_t>();
        cfg.heads = h.at("heads").get<std::size_t>();
        cfg.hidden = h.at("hidden").get<std::size_t>();
        cfg.steps = h.at("steps").get<std::size_t>();
        cfg.max_frames = h.at("max_frames").get<std::size_t>();
        cfg.clip_x0 = h.at("clip_x0").get<double>();
        DMDModel m(cfg, 0);
        params_from_json(m.params_, s.body.at("params"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed dmd section: ") + e.what());
    }
}

Tensor dmd_loss(Tape& tape, const DMDModel& model, const Tensor& x0, const TokenSequence& z, Rng& rng) {
    const auto& sched = model.schedule();
    const std::size_t t = 1 + rng.index(sched.steps);
    const auto eps = rng.normal_vector(x0.numel());
    const Tensor xt = Tensor::matrix(x0.rows(), x0.cols(), q_sample(sched, x0.values(), t, eps));
    const Tensor cond = model.encode_condition(tape, z);
    const Tensor pred = model.predict_noise(tape, cond, t, xt);
    return tape.mse(pred, Tensor::matrix(x0.rows(), x0.cols(), eps));
}

std::vector<double> train_dmd(DMDModel& model, const std::vector<DMDSample>& data, const DMDTrainConfig& cfg,
                              std::uint64_t seed) {
    std::vector<double> history;
    if (cfg.epochs == 0) return history;
    if (data.empty()) throw ContractError("train_dmd needs a nonempty dataset");
    if (cfg.batch == 0) throw ConfigError("batch size must be positive");
    Rng rng(seed);
    Adam opt(model.params().tensors(), cfg.adam);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);
            const double inv = 1.0 / static_cast<double>(end - start);
            opt.zero_grad();
            for (std::size_t b = start; b < end; ++b) {
                Tape tape;
                const Tensor loss = dmd_loss(tape, model, data[order[b]].x0, data[order[b]].tokens, rng);
                if (!std::isfinite(loss.item())) {
                    throw TrainingError("dmd loss is not finite at epoch " + std::to_string(epoch) + ", step " +
                                        std::to_string(step));
                }
                sum += loss.item();
                tape.backward(tape.scale(loss, inv));
            }
            opt.step();
            ++step;
        }
        history.push_back(sum / static_cast<double>(data.size()));
    }
    return history;
}

}  // namespace ude::dmd
