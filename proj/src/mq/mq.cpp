#include "ude/mq/mq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ude/errors.hpp"

namespace ude::mq {

TokenSequence quantize(std::span<const double> codebook, std::size_t k, std::size_t d, std::span<const double> e,
                       std::size_t rows) {
    if (codebook.size() != k * d || e.size() != rows * d) throw DimensionError("quantize: dimension mismatch");
    TokenSequence out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* er = e.data() + r * d;
        double best = std::numeric_limits<double>::infinity();
        int best_i = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const double* c = codebook.data() + i * d;
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = er[j] - c[j];
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_i = static_cast<int>(i);
            }
        }
        out[r] = best_i;
    }
    return out;
}

MQModel::MQModel(const MQConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.codebook_size < 2) throw ConfigError("codebook size must be at least 2");
    if (cfg.channels == 0 || cfg.hidden == 0 || cfg.code_dim == 0) throw ConfigError("MQ widths must be positive");
    Rng rng(seed);
    const std::size_t c = cfg.channels, h = cfg.hidden, d = cfg.code_dim;
    const std::size_t ew[3] = {3, 4, 4};
    const std::size_t ein[3] = {c, h, h};
    const std::size_t eout[3] = {h, h, d};
    for (int i = 0; i < 3; ++i) {
        const std::string n = "enc" + std::to_string(i);
        enc_w[i] = params_.add_xavier(n + ".w", {ew[i], ein[i], eout[i]}, ew[i] * ein[i], ew[i] * eout[i], rng);
        enc_b[i] = params_.add_zeros(n + ".b", {eout[i]});
    }
    const std::size_t din[3] = {d, h, h};
    const std::size_t dout[3] = {h, h, c};
    for (int i = 0; i < 3; ++i) {
        const std::string n = "dec" + std::to_string(i);
        dec_w[i] = params_.add_xavier(n + ".w", {3, din[i], dout[i]}, 3 * din[i], 3 * dout[i], rng);
        dec_b[i] = params_.add_zeros(n + ".b", {dout[i]});
    }
    codebook_ = params_.add_normal("codebook", {cfg.codebook_size, d}, 1.0, rng);
    mean_.assign(c, 0.0);
    std_.assign(c, 1.0);
}

std::vector<double> to_root_relative(const motion::MotionSequence& m) {
    const std::size_t c = m.width();
    std::vector<double> f(m.frames.size());
    for (std::size_t t = 0; t < m.length(); ++t) {
        const double* p = m.frames.data() + t * c;
        const double* prev = t == 0 ? nullptr : p - c;
        double* o = f.data() + t * c;
        o[0] = p[0] - (prev ? prev[0] : 0.0);
        o[1] = p[1];
        o[2] = p[2] - (prev ? prev[2] : 0.0);
        for (std::size_t j = 3; j + 2 < c; j += 3) {
            o[j] = p[j] - p[0];
            o[j + 1] = p[j + 1];
            o[j + 2] = p[j + 2] - p[2];
        }
    }
    return f;
}

motion::MotionSequence from_root_relative(std::span<const double> f, std::size_t rows, std::size_t channels,
                                          double fps) {
    if (f.size() != rows * channels || channels % 3 != 0) throw DimensionError("root-relative frame block shape");
    motion::MotionSequence m(fps, channels / 3, rows);
    double x = 0.0, z = 0.0;
    for (std::size_t t = 0; t < rows; ++t) {
        const double* o = f.data() + t * channels;
        double* p = m.frames.data() + t * channels;
        x += o[0];
        z += o[2];
        p[0] = x;
        p[1] = o[1];
        p[2] = z;
        for (std::size_t j = 3; j + 2 < channels; j += 3) {
            p[j] = o[j] + x;
            p[j + 1] = o[j + 1];
            p[j + 2] = o[j + 2] + z;
        }
    }
    return m;
}

void MQModel::fit_normalization(const std::vector<const motion::MotionSequence*>& data) {
    const std::size_t c = cfg_.channels;
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    double n = 0.0;
    for (const auto* m : data) {
        if (m->width() != c) throw DimensionError("motion width does not match MQ channels");
        const auto f = to_root_relative(*m);
        for (std::size_t i = 0; i < f.size(); ++i) {
            sum[i % c] += f[i];
            sq[i % c] += f[i] * f[i];
        }
        n += static_cast<double>(m->length());
    }
    if (n == 0.0) throw ContractError("cannot fit normalization on empty data");
    for (std::size_t j = 0; j < c; ++j) {
        mean_[j] = sum[j] / n;
        std_[j] = std::sqrt(std::max(sq[j] / n - mean_[j] * mean_[j], 0.0));
        std_[j] = std::max(std_[j], 1e-3);
    }
}

Tensor MQModel::normalize(const motion::MotionSequence& m) const {
    const std::size_t c = cfg_.channels;
    if (m.width() != c) throw DimensionError("motion width " + std::to_string(m.width()) + " != MQ channels " +
                                             std::to_string(c));
    std::vector<double> v = to_root_relative(m);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mean_[i % c]) / std_[i % c];
    return Tensor::matrix(m.length(), c, std::move(v));
}

motion::MotionSequence MQModel::denormalize(const Tensor& x, double fps) const {
    const std::size_t c = cfg_.channels;
    if (x.rank() != 2 || x.cols() != c) throw DimensionError("denormalize expects T x " + std::to_string(c));
    std::vector<double> f(x.rows() * c);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = x[i] * std_[i % c] + mean_[i % c];
    return from_root_relative(f, x.rows(), c, fps);
}

Tensor MQModel::encode(Tape& tape, const Tensor& x) const {
    if (x.rank() != 2 || x.cols() != cfg_.channels) throw DimensionError("encode expects T x " +
                                                                         std::to_string(cfg_.channels));
    if (x.rows() == 0 || x.rows() % kDownsample != 0) {
        throw DimensionError("sequence length " + std::to_string(x.rows()) + " is not divisible by " +
                             std::to_string(kDownsample));
    }
    Tensor h = tape.relu(tape.add_row(tape.conv1d(x, enc_w[0], 1, 1), enc_b[0]));
    h = tape.relu(tape.add_row(tape.conv1d(h, enc_w[1], 2, 1), enc_b[1]));
    return tape.add_row(tape.conv1d(h, enc_w[2], 2, 1), enc_b[2]);
}

Tensor MQModel::decode(Tape& tape, const Tensor& e) const {
    if (e.rank() != 2 || e.cols() != cfg_.code_dim) throw DimensionError("decode expects T' x d");
    Tensor h = tape.relu(tape.add_row(tape.conv1d(e, dec_w[0], 1, 1), dec_b[0]));
    h = tape.upsample_rows(h, 2);
    h = tape.relu(tape.add_row(tape.conv1d(h, dec_w[1], 1, 1), dec_b[1]));
    h = tape.upsample_rows(h, 2);
    return tape.add_row(tape.conv1d(h, dec_w[2], 1, 1), dec_b[2]);
}

Tensor MQModel::code_rows(Tape& tape, const TokenSequence& z) const {
    for (int id : z) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg_.codebook_size) {
            throw TokenError("token " + std::to_string(id) + " outside codebook of size " +
                             std::to_string(cfg_.codebook_size));
        }
    }
    return tape.gather_rows(codebook_, z);
}

TokenSequence MQModel::quantize(const Tensor& e) const {
    return mq::quantize(codebook_.values(), cfg_.codebook_size, cfg_.code_dim, e.values(), e.rows());
}

TokenSequence MQModel::tokenize(const motion::MotionSequence& m) const {
    Tape tape(false);
    return quantize(encode(tape, normalize(m)));
}

motion::MotionSequence MQModel::decode_tokens(const TokenSequence& z, double fps) const {
    if (z.empty()) throw ContractError("cannot decode an empty token sequence");
    Tape tape(false);
    return denormalize(decode(tape, code_rows(tape, z)), fps);
}

VQLossParts MQModel::vq_loss(Tape& tape, const Tensor& x) const {
    VQLossParts p;
    p.embedding = encode(tape, x);
    p.tokens = quantize(p.embedding);
    const Tensor q = tape.gather_rows(codebook_, p.tokens);
    const Tensor e_sg = tape.detach(p.embedding);
    const Tensor q_sg = tape.detach(q);
    // Straight-through: forward value is exactly q, gradient reaches e unchanged.
    const Tensor q_st = tape.add(tape.sub(p.embedding, e_sg), q_sg);
    p.recon = decode(tape, q_st);
    p.reconstruction = tape.mse(p.recon, x);
    p.codebook = tape.mse(e_sg, q);
    p.commitment = tape.mse(p.embedding, q_sg);
    p.total = tape.add(p.reconstruction,
                       tape.add(tape.scale(p.codebook, cfg_.beta1), tape.scale(p.commitment, cfg_.beta2)));
    return p;
}

CheckpointSection MQModel::to_section() const {
    CheckpointSection s;
    s.module = "mq";
    s.body["hyper"] = {{"channels", cfg_.channels},         {"hidden", cfg_.hidden},
                       {"code_dim", cfg_.code_dim},         {"codebook_size", cfg_.codebook_size},
                       {"beta1", cfg_.beta1},               {"beta2", cfg_.beta2},
                       {"downsample", kDownsample}};
    s.body["norm"] = {{"mean", mean_}, {"std", std_}};
    s.body["params"] = params_to_json(params_);
    return s;
}

MQModel MQModel::from_section(const CheckpointSection& s) {
    if (s.module != "mq") throw FormatError("expected module=mq, found module=" + s.module);
    try {
        const auto& h = s.body.at("hyper");
        MQConfig cfg;
        cfg.channels = h.at("channels").get<std::size_t>();
        cfg.hidden = h.at("hidden").get<std::size_t>();
        cfg.code_dim = h.at("code_dim").get<std::size_t>();
        cfg.codebook_size = h.at("codebook_size").get<std::size_t>();
        cfg.beta1 = h.at("beta1").get<double>();
        cfg.beta2 = h.at("beta2").get<double>();
        MQModel m(cfg, 0);
        params_from_json(m.params_, s.body.at("params"));
        m.mean_ = s.body.at("norm").at("mean").get<std::vector<double>>();
        m.std_ = s.body.at("norm").at("std").get<std::vector<double>>();
        if (m.mean_.size() != cfg.channels || m.std_.size() != cfg.channels) {
            throw FormatError("normalization size mismatch");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed mq section: ") + e.what());
    }
}

MQTrainResult train_mq(MQModel& model, const std::vector<const motion::MotionSequence*>& data,
                       const MQTrainConfig& cfg, std::uint64_t seed) {
    MQTrainResult res;
    if (cfg.epochs == 0) return res;
    if (data.empty()) throw ContractError("train_mq needs a nonempty dataset");
    if (cfg.batch == 0) throw ConfigError("batch size must be positive");

    Rng rng(seed);
    model.fit_normalization(data);
    std::vector<Tensor> xs;
    xs.reserve(data.size());
    for (const auto* m : data) xs.push_back(model.normalize(*m));

    const std::size_t k = model.config().codebook_size;
    const std::size_t d = model.config().code_dim;
    Tensor codebook = model.codebook();

    // Seed the codebook with encoder outputs of random samples.
    const auto reseed = [&](const std::vector<double>& pool, const std::vector<std::size_t>& codes) {
        const std::size_t rows = pool.size() / d;
        if (rows == 0) return;
        auto cb = codebook.mutable_values();
        for (std::size_t code : codes) {
            const std::size_t r = rng.index(rows);
            std::copy_n(pool.begin() + static_cast<long>(r * d), d, cb.begin() + static_cast<long>(code * d));
        }
    };
    {
        std::vector<double> pool;
        Tape tape(false);
        for (std::size_t i = 0; i < std::min<std::size_t>(xs.size(), 64); ++i) {
            const Tensor e = model.encode(tape, xs[rng.index(xs.size())]);
            pool.insert(pool.end(), e.values().begin(), e.values().end());
        }
        std::vector<std::size_t> all(k);
        std::iota(all.begin(), all.end(), 0);
        reseed(pool, all);
    }

    Adam opt(model.params().tensors(), cfg.adam);
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        std::vector<std::size_t> usage(k, 0);
        std::vector<double> pool;
        double loss_sum = 0.0, rec_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);
            const double inv = 1.0 / static_cast<double>(end - start);
            opt.zero_grad();
            for (std::size_t b = start; b < end; ++b) {
                Tape tape;
                const auto parts = model.vq_loss(tape, xs[order[b]]);
                const double lv = parts.total.item();
                if (!std::isfinite(lv)) {
                    throw TrainingError("mq loss is not finite at epoch " + std::to_string(epoch));
                }
                loss_sum += lv;
                rec_sum += parts.reconstruction.item();
                for (int z : parts.tokens) ++usage[static_cast<std::size_t>(z)];
                pool.insert(pool.end(), parts.embedding.values().begin(), parts.embedding.values().end());
                tape.backward(tape.scale(parts.total, inv));
            }
            try {
                opt.step();
            } catch (const TrainingError& e) {
                throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
            }
        }
        res.loss_history.push_back(loss_sum / static_cast<double>(xs.size()));
        res.recon_history.push_back(rec_sum / static_cast<double>(xs.size()));
        if (cfg.reset_dead_codes && epoch + 1 < cfg.epochs) {
            std::vector<std::size_t> dead;
            for (std::size_t i = 0; i < k; ++i)
                if (usage[i] == 0) dead.push_back(i);
            reseed(pool, dead);
        }
    }
    return res;
}

double codebook_utilization(const MQModel& model, const std::vector<const motion::MotionSequence*>& data) {
    std::vector<bool> used(model.config().codebook_size, false);
    for (const auto* m : data)
        for (int z : model.tokenize(*m)) used[static_cast<std::size_t>(z)] = true;
    return static_cast<double>(std::count(used.begin(), used.end(), true)) / static_cast<double>(used.size());
}

}  // namespace ude::mq
