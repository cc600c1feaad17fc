#include "ude/cli/config.hpp"

#include <charconv>
#include <sstream>

#include "ude/errors.hpp"
#include "ude/motion/io.hpp"

namespace ude::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        out = true;
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        out = false;
        return true;
    }
    return false;
}

}  // namespace

RunConfig::RunConfig() {
    using K = Kind;
    define("seed", K::integer, "1");

    define("data.fps", K::real, "20");
    define("data.frames", K::integer, "64");
    define("data.train", K::integer, "512");
    define("data.test", K::integer, "128");
    define("data.sample_rate", K::real, "8000");
    define("data.beat_jitter", K::real, "0.1");
    define("data.amplitude_jitter", K::real, "0.15");
    const motion::SynthConfig sc;
    for (const auto& [fam, n] : sc.counts) define("data.count." + fam, K::integer, std::to_string(n));

    define("mq.hidden", K::integer, "64");
    define("mq.code_dim", K::integer, "32");
    define("mq.codebook_size", K::integer, "64");
    define("mq.beta1", K::real, "1");
    define("mq.beta2", K::real, "1");
    define("mq.epochs", K::integer, "50");
    define("mq.batch", K::integer, "16");
    define("mq.lr", K::real, "1e-4");
    define("mq.reset_dead_codes", K::boolean, "true");

    define("mate.dim", K::integer, "64");
    define("mate.layers", K::integer, "2");
    define("mate.heads", K::integer, "4");
    define("mate.hidden", K::integer, "128");

    define("utt.layers", K::integer, "2");
    define("utt.heads", K::integer, "4");
    define("utt.hidden", K::integer, "128");
    define("utt.z_dim", K::integer, "16");
    define("utt.max_tokens", K::integer, "64");
    define("utt.epochs", K::integer, "30");
    define("utt.batch", K::integer, "16");
    define("utt.lr", K::real, "1e-4");
    define("utt.disc_lr", K::real, "1e-4");
    define("utt.beta_adv", K::real, "1");
    define("utt.z_fraction", K::real, "0.5");
    define("utt.adversarial", K::boolean, "true");

    define("disc.dim", K::integer, "64");
    define("disc.layers", K::integer, "2");
    define("disc.heads", K::integer, "4");
    define("disc.hidden", K::integer, "128");

    define("dmd.dim", K::integer, "64");
    define("dmd.enc_layers", K::integer, "2");
    define("dmd.dec_layers", K::integer, "2");
    define("dmd.heads", K::integer, "4");
    define("dmd.hidden", K::integer, "128");
    define("dmd.steps", K::integer, "50");
    define("dmd.clip_x0", K::real, "5");
    define("dmd.epochs", K::integer, "30");
    define("dmd.batch", K::integer, "16");
    define("dmd.lr", K::real, "1e-4");

    define("retrieval.hidden", K::integer, "64");
    define("retrieval.dim", K::integer, "64");
    define("retrieval.temperature", K::real, "0.07");
    define("retrieval.epochs", K::integer, "40");
    define("retrieval.batch", K::integer, "32");
    define("retrieval.lr", K::real, "1e-3");

    define("sampling.greedy", K::boolean, "false");
    define("sampling.temperature", K::real, "1");
    define("sampling.top_k", K::integer, "0");

    define("generate.frames", K::integer, "64");
    define("generate.decoder", K::text, "dmd");
    define("transition.primitive_len", K::integer, "8");
    define("transition.text_frames", K::integer, "64");

    define("eval.decoder", K::text, "dmd");
    define("eval.samples_per_input", K::integer, "1");
    define("eval.sigma_frames", K::real, "3");
    define("eval.distractors", K::integer, "60");
    define("eval.trials", K::integer, "1");
}

void RunConfig::define(const std::string& key, Kind kind, const std::string& value) {
    kinds_[key] = kind;
    values_[key] = value;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
    const auto it = kinds_.find(key);
    if (it == kinds_.end()) throw ConfigError("unknown config key '" + key + "'");
    const std::string v = trim(raw);
    bool ok = !v.empty();
    switch (it->second) {
        case Kind::integer: {
            std::uint64_t n = 0;
            const auto r = std::from_chars(v.data(), v.data() + v.size(), n);
            ok = ok && r.ec == std::errc() && r.ptr == v.data() + v.size();
            break;
        }
        case Kind::real: {
            double d = 0.0;
            const auto r = std::from_chars(v.data(), v.data() + v.size(), d);
            ok = ok && r.ec == std::errc() && r.ptr == v.data() + v.size() && std::isfinite(d);
            break;
        }
        case Kind::boolean: {
            bool b = false;
            ok = ok && parse_bool(v, b);
            break;
        }
        case Kind::text:
            if (key.ends_with(".decoder")) ok = ok && (v == "vq" || v == "dmd" || v == "gt");
            break;
    }
    if (!ok) throw ConfigError("invalid value '" + v + "' for config key '" + key + "'");
    values_[key] = v;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(no) + ": expected key = value");
        }
        try {
            c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(no) + ": " + e.what());
        }
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse(read_file(path), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::real(const std::string& key) const {
    const std::string& v = get(key);
    double d = 0.0;
    std::from_chars(v.data(), v.data() + v.size(), d);
    return d;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
    const std::string& v = get(key);
    std::uint64_t n = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), n);
    if (r.ec != std::errc()) throw ConfigError("config key '" + key + "' is not an integer");
    return n;
}

std::size_t RunConfig::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

bool RunConfig::flag(const std::string& key) const {
    bool b = false;
    if (!parse_bool(get(key), b)) throw ConfigError("config key '" + key + "' is not a boolean");
    return b;
}

nlohmann::ordered_json RunConfig::echo() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

motion::SynthConfig synth_config(const RunConfig& c) {
    motion::SynthConfig s;
    s.fps = c.real("data.fps");
    s.frames = c.count("data.frames");
    s.train_count = c.count("data.train");
    s.test_count = c.count("data.test");
    s.sample_rate = c.real("data.sample_rate");
    s.beat_jitter = c.real("data.beat_jitter");
    s.amplitude_jitter = c.real("data.amplitude_jitter");
    for (auto& [fam, n] : s.counts) n = static_cast<int>(c.count("data.count." + fam));
    s.audio.frame_rate = s.fps;
    s.validate();
    return s;
}

mq::MQConfig mq_config(const RunConfig& c) {
    mq::MQConfig m;
    m.hidden = c.count("mq.hidden");
    m.code_dim = c.count("mq.code_dim");
    m.codebook_size = c.count("mq.codebook_size");
    m.beta1 = c.real("mq.beta1");
    m.beta2 = c.real("mq.beta2");
    return m;
}

mq::MQTrainConfig mq_train_config(const RunConfig& c) {
    mq::MQTrainConfig t;
    t.epochs = c.count("mq.epochs");
    t.batch = c.count("mq.batch");
    t.adam.lr = c.real("mq.lr");
    t.reset_dead_codes = c.flag("mq.reset_dead_codes");
    return t;
}

mate::MATEConfig mate_config(const RunConfig& c, std::size_t vocab_size, std::size_t feature_dims) {
    mate::MATEConfig m;
    m.vocab_size = vocab_size;
    m.feature_dims = feature_dims;
    m.dim = c.count("mate.dim");
    m.layers = c.count("mate.layers");
    m.heads = c.count("mate.heads");
    m.hidden = c.count("mate.hidden");
    m.max_audio = std::max<std::size_t>(m.max_audio, c.count("data.frames"));
    return m;
}

utt::UTTConfig utt_config(const RunConfig& c) {
    utt::UTTConfig u;
    u.codebook_size = c.count("mq.codebook_size");
    u.dim = c.count("mate.dim");
    u.layers = c.count("utt.layers");
    u.heads = c.count("utt.heads");
    u.hidden = c.count("utt.hidden");
    u.z_dim = c.count("utt.z_dim");
    u.max_tokens = c.count("utt.max_tokens");
    return u;
}

utt::DiscConfig disc_config(const RunConfig& c) {
    utt::DiscConfig d;
    d.channels = 3 * motion::Skeleton::desk8().joint_count();
    d.cond_dim = c.count("mate.dim");
    d.dim = c.count("disc.dim");
    d.layers = c.count("disc.layers");
    d.heads = c.count("disc.heads");
    d.hidden = c.count("disc.hidden");
    return d;
}

utt::UTTTrainConfig utt_train_config(const RunConfig& c) {
    utt::UTTTrainConfig t;
    t.epochs = c.count("utt.epochs");
    t.batch = c.count("utt.batch");
    t.adam.lr = c.real("utt.lr");
    t.disc_adam.lr = c.real("utt.disc_lr");
    t.beta_adv = c.real("utt.beta_adv");
    t.z_fraction = c.real("utt.z_fraction");
    t.adversarial = c.flag("utt.adversarial");
    return t;
}

dmd::DMDConfig dmd_config(const RunConfig& c) {
    dmd::DMDConfig d;
    d.codebook_size = c.count("mq.codebook_size");
    d.dim = c.count("dmd.dim");
    d.enc_layers = c.count("dmd.enc_layers");
    d.dec_layers = c.count("dmd.dec_layers");
    d.heads = c.count("dmd.heads");
    d.hidden = c.count("dmd.hidden");
    d.steps = c.count("dmd.steps");
    d.clip_x0 = c.real("dmd.clip_x0");
    d.max_frames = std::max<std::size_t>(d.max_frames, 2 * c.count("data.frames"));
    return d;
}

dmd::DMDTrainConfig dmd_train_config(const RunConfig& c) {
    dmd::DMDTrainConfig t;
    t.epochs = c.count("dmd.epochs");
    t.batch = c.count("dmd.batch");
    t.adam.lr = c.real("dmd.lr");
    return t;
}

metrics::RetrievalConfig retrieval_config(const RunConfig& c, std::size_t vocab_size) {
    metrics::RetrievalConfig r;
    r.vocab_size = vocab_size;
    r.hidden = c.count("retrieval.hidden");
    r.dim = c.count("retrieval.dim");
    r.temperature = c.real("retrieval.temperature");
    return r;
}

metrics::RetrievalTrainConfig retrieval_train_config(const RunConfig& c) {
    metrics::RetrievalTrainConfig t;
    t.epochs = c.count("retrieval.epochs");
    t.batch = c.count("retrieval.batch");
    t.adam.lr = c.real("retrieval.lr");
    return t;
}

utt::SamplingConfig sampling_config(const RunConfig& c) {
    utt::SamplingConfig s;
    s.greedy = c.flag("sampling.greedy");
    s.temperature = c.real("sampling.temperature");
    s.top_k = c.count("sampling.top_k");
    if (!(s.temperature > 0.0)) throw ConfigError("sampling.temperature must be positive");
    return s;
}

}  // namespace ude::cli
