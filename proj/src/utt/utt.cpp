#include "ude/utt/utt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ude/errors.hpp"

namespace ude::utt {

VisibilityMask build_mask(std::size_t cond_len, std::size_t motion_len) {
    if (cond_len == 0) throw ContractError("condition length must be at least 1");
    const std::size_t n = cond_len + motion_len;
    VisibilityMask m{n, n, std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) m.visible[r * n + c] = (c < cond_len || c <= r) ? 1 : 0;
    return m;
}

std::size_t motion_position(std::size_t row) { return mq::kDownsample * row + 1; }

UTTModel::UTTModel(const UTTConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.codebook_size < 2 || cfg.dim == 0 || cfg.max_tokens == 0) throw ConfigError("invalid UTT sizes");
    Rng rng(seed);
    token_table_ = params_.add_normal("token_table", {cfg.codebook_size + 2, cfg.dim}, 1.0, rng);
    stack_ = nn::TransformerStack(params_, "decoder", cfg.layers, cfg.dim, cfg.heads, cfg.hidden, rng);
    out_ = nn::Linear(params_, "out", cfg.dim, cfg.codebook_size + 2, rng);
    z1_ = nn::Linear(params_, "z_mlp.0", cfg.z_dim, cfg.dim, rng);
    z2_ = nn::Linear(params_, "z_mlp.1", cfg.dim, cfg.dim, rng);
    pos_ = nn::sinusoidal_table(motion_position(cfg.max_tokens) + 1, cfg.dim);
}

Tensor UTTModel::inject_z(Tape& tape, const Tensor& glob, const std::vector<double>& z) const {
    if (z.size() != cfg_.z_dim) throw DimensionError("z has " + std::to_string(z.size()) + " entries, expected " +
                                                     std::to_string(cfg_.z_dim));
    const Tensor zt = Tensor::matrix(1, z.size(), z);
    const Tensor zz = z2_.forward(tape, tape.relu(z1_.forward(tape, zt)));
    return tape.add(glob, zz);
}

Tensor UTTModel::forward_logits(Tape& tape, const mate::CondEmbedding& cond, const std::vector<int>& prefix,
                                const std::optional<std::vector<double>>& z) const {
    if (prefix.empty() || prefix.front() != bos()) throw ContractError("token prefix must start with BOS");
    if (prefix.size() > cfg_.max_tokens) {
        throw LengthError("token prefix of " + std::to_string(prefix.size()) + " exceeds context window " +
                          std::to_string(cfg_.max_tokens));
    }
    if (cond.glob.cols() != cfg_.dim) throw DimensionError("condition width does not match UTT width");
    const Tensor glob = z ? inject_z(tape, cond.glob, *z) : cond.glob;
    const std::size_t s = prefix.size();
    std::vector<double> pos_rows(s * cfg_.dim);
    for (std::size_t i = 0; i < s; ++i) {
        const std::size_t p = motion_position(i);
        std::copy_n(pos_.values().begin() + static_cast<long>(p * cfg_.dim), cfg_.dim,
                    pos_rows.begin() + static_cast<long>(i * cfg_.dim));
    }
    const Tensor mot = tape.add(tape.gather_rows(token_table_, prefix), Tensor::matrix(s, cfg_.dim, pos_rows));
    std::vector<Tensor> parts{glob};
    if (cond.seq.rank() == 2 && cond.seq.rows() > 0) parts.push_back(cond.seq);
    parts.push_back(mot);
    const std::size_t l = 1 + (parts.size() == 3 ? cond.seq.rows() : 0);
    const Tensor x = tape.concat_rows(parts);
    const auto mask = build_mask(l, s);
    const Tensor h = stack_.forward(tape, x, &mask);
    return out_.forward(tape, tape.slice_rows(h, l, s));
}

CheckpointSection UTTModel::to_section() const {
    CheckpointSection sec;
    sec.module = "utt";
    sec.body["hyper"] = {{"codebook_size", cfg_.codebook_size}, {"dim", cfg_.dim},       {"layers", cfg_.layers},
                         {"heads", cfg_.heads},                 {"hidden", cfg_.hidden}, {"z_dim", cfg_.z_dim},
                         {"max_tokens", cfg_.max_tokens}};
    sec.body["params"] = params_to_json(params_);
    return sec;
}

UTTModel UTTModel::from_section(const CheckpointSection& s) {
    if (s.module != "utt") throw FormatError("expected module=utt, found module=" + s.module);
    try {
        const auto& h = s.body.at("hyper");
        UTTConfig cfg;
        cfg.codebook_size = h.at("codebook_size").get<std::size_t>();
        cfg.dim = h.at("dim").get<std::size_t>();
        cfg.layers = h.at("layers").get<std::size_t>();
        cfg.heads = h.at("heads").get<std::size_t>();
        cfg.hidden = h.at("hidden").get<std::size_t>();
        cfg.z_dim = h.at("z_dim").get<std::size_t>();
        cfg.max_tokens = h.at("max_tokens").get<std::size_t>();
        UTTModel m(cfg, 0);
        params_from_json(m.params_, s.body.at("params"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed utt section: ") + e.what());
    }
}

int sample_token(std::span<const double> logits, const SamplingConfig& s, std::size_t default_top_k,
                 const std::vector<int>& banned, Rng& rng) {
    std::vector<int> cand;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (std::find(banned.begin(), banned.end(), static_cast<int>(i)) == banned.end()) cand.push_back(static_cast<int>(i));
    if (cand.empty()) throw ContractError("no token is allowed at this step");
    // Stable order: higher logit first, lower id on ties.
    std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
        return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)];
    });
    if (s.greedy) return cand.front();
    if (!(s.temperature > 0.0)) throw ConfigError("temperature must be positive");
    std::size_t k = s.top_k == 0 ? default_top_k : s.top_k;
    k = std::clamp<std::size_t>(k, 1, cand.size());
    if (k == 1) return cand.front();
    const double top = logits[static_cast<std::size_t>(cand.front())];
    std::vector<double> w(k);
    for (std::size_t i = 0; i < k; ++i) w[i] = std::exp((logits[static_cast<std::size_t>(cand[i])] - top) / s.temperature);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = rng.uniform(0.0, total);
    for (std::size_t i = 0; i < k; ++i) {
        if (u < w[i]) return cand[i];
        u -= w[i];
    }
    return cand.front();
}

TokenSequence generate_tokens(const UTTModel& model, const mate::CondEmbedding& cond, const GenerateOptions& opt) {
    if (opt.primitive.size() > opt.max_len) throw ContractError("primitive is longer than max_len");
    const std::size_t k = model.config().codebook_size;
    for (int t : opt.primitive) {
        if (t < 0 || static_cast<std::size_t>(t) >= k) throw TokenError("primitive token out of range");
    }
    Rng rng(opt.seed);
    TokenSequence out = opt.primitive;
    std::vector<int> prefix{model.bos()};
    prefix.insert(prefix.end(), out.begin(), out.end());
    Tape tape(false);
    while (out.size() < opt.max_len) {
        const Tensor logits = model.forward_logits(tape, cond, prefix, opt.z);
        const auto last = logits.values().subspan((logits.rows() - 1) * logits.cols(), logits.cols());
        std::vector<int> banned{model.bos()};
        if (out.size() < opt.min_len) banned.push_back(model.eos());
        const int next = sample_token(last, opt.sampling, std::max<std::size_t>(1, k / 4), banned, rng);
        if (next == model.eos()) break;
        out.push_back(next);
        prefix.push_back(next);
    }
    return out;
}

Discriminator::Discriminator(const DiscConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    conv1_ = params_.add_xavier("conv1.w", {4, cfg.channels, cfg.dim}, 4 * cfg.channels, 4 * cfg.dim, rng);
    conv1_b_ = params_.add_zeros("conv1.b", {cfg.dim});
    conv2_ = params_.add_xavier("conv2.w", {4, cfg.dim, cfg.dim}, 4 * cfg.dim, 4 * cfg.dim, rng);
    conv2_b_ = params_.add_zeros("conv2.b", {cfg.dim});
    cond_fc_ = nn::Linear(params_, "cond_fc", cfg.cond_dim, cfg.dim, rng);
    stack_ = nn::TransformerStack(params_, "encoder", cfg.layers, cfg.dim, cfg.heads, cfg.hidden, rng);
    score_ = nn::Linear(params_, "score", cfg.dim, 1, rng);
}

Tensor Discriminator::forward(Tape& tape, const Tensor& e_glob, const Tensor& motion) const {
    if (motion.rank() != 2 || motion.cols() != cfg_.channels) throw DimensionError("discriminator motion width");
    if (motion.rows() == 0 || motion.rows() % 4 != 0) {
        throw DimensionError("discriminator needs T divisible by 4, got " + std::to_string(motion.rows()));
    }
    Tensor h = tape.relu(tape.add_row(tape.conv1d(motion, conv1_, 2, 1), conv1_b_));
    h = tape.add_row(tape.conv1d(h, conv2_, 2, 1), conv2_b_);
    const Tensor c = cond_fc_.forward(tape, tape.reshape(e_glob, {1, cfg_.cond_dim}));
    h = tape.add_row(h, tape.reshape(c, {cfg_.dim}));
    h = stack_.forward(tape, h, nullptr);
    return score_.forward(tape, h);
}

CheckpointSection Discriminator::to_section() const {
    CheckpointSection sec;
    sec.module = "disc";
    sec.body["hyper"] = {{"channels", cfg_.channels}, {"cond_dim", cfg_.cond_dim}, {"dim", cfg_.dim},
                         {"layers", cfg_.layers},     {"heads", cfg_.heads},       {"hidden", cfg_.hidden}};
    sec.body["params"] = params_to_json(params_);
    return sec;
}

Discriminator Discriminator::from_section(const CheckpointSection& s) {
    if (s.module != "disc") throw FormatError("expected module=disc, found module=" + s.module);
    try {
        const auto& h = s.body.at("hyper");
        DiscConfig cfg;
        cfg.channels = h.at("channels").get<std::size_t>();
        cfg.cond_dim = h.at("cond_dim").get<std::size_t>();
        cfg.dim = h.at("dim").get<std::size_t>();
        cfg.layers = h.at("layers").get<std::size_t>();
        cfg.heads = h.at("heads").get<std::size_t>();
        cfg.hidden = h.at("hidden").get<std::size_t>();
        Discriminator d(cfg, 0);
        params_from_json(d.params_, s.body.at("params"));
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed disc section: ") + e.what());
    }
}

UTTLossParts utt_loss(Tape& tape, const UTTModel& model, const Discriminator& disc, const mq::MQModel& mq,
                      const mate::CondEmbedding& cond, const TokenSequence& gt,
                      const std::optional<std::vector<double>>& z, double beta_adv) {
    const std::size_t k = model.config().codebook_size;
    if (mq.config().codebook_size != k) throw DimensionError("UTT and MQ codebook sizes differ");
    if (gt.empty()) throw ContractError("ground-truth token sequence is empty");
    std::vector<int> input{model.bos()};
    input.insert(input.end(), gt.begin(), gt.end());
    std::vector<int> target(gt.begin(), gt.end());
    target.push_back(model.eos());

    UTTLossParts p;
    p.logits = model.forward_logits(tape, cond, input, z);
    p.ce = tape.cross_entropy(p.logits, target);
    if (beta_adv == 0.0) {
        p.adv = Tensor::scalar(0.0);
        p.total = p.ce;
        return p;
    }
    // Motion-token rows only (drop the EOS step), code columns only.
    const std::size_t s = gt.size();
    const Tensor code_logits = tape.slice_cols(tape.slice_rows(p.logits, 0, s), 0, k);
    const Tensor soft = tape.softmax(code_logits, -1);
    TokenSequence hard_ids(s);
    for (std::size_t i = 0; i < s; ++i) {
        const auto row = code_logits.values().subspan(i * k, k);
        hard_ids[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    const Tensor codebook = mq.codebook();
    const Tensor soft_emb = tape.matmul(soft, codebook);
    const Tensor hard_emb = tape.detach(tape.gather_rows(codebook, hard_ids));
    // Straight-through: value is the hard code, gradient follows the soft mixture.
    const Tensor st = tape.add(hard_emb, tape.sub(soft_emb, tape.detach(soft_emb)));
    p.fake_motion = mq.decode(tape, st);
    const Tensor scores = disc.forward(tape, tape.detach(cond.glob), p.fake_motion);
    p.adv = tape.scale(tape.mean(scores), -1.0);
    p.total = tape.add(p.ce, tape.scale(p.adv, beta_adv));
    return p;
}

Tensor disc_hinge_loss(Tape& tape, const Discriminator& disc, const Tensor& e_glob, const Tensor& real,
                       const Tensor& fake) {
    const Tensor g = tape.detach(e_glob);
    const Tensor sr = disc.forward(tape, g, real);
    const Tensor sf = disc.forward(tape, g, tape.detach(fake));
    const Tensor lr = tape.mean(tape.relu(tape.add_scalar(tape.scale(sr, -1.0), 1.0)));
    const Tensor lf = tape.mean(tape.relu(tape.add_scalar(sf, 1.0)));
    return tape.add(lr, lf);
}

}  // namespace ude::utt
