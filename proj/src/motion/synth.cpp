#include "ude/motion/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <Eigen/Geometry>

#include "ude/errors.hpp"
#include "ude/motion/preprocess.hpp"

namespace ude::motion {

namespace {

constexpr double kPi = std::numbers::pi;

struct FamilySpec {
    std::string name;
    std::string verb;
    std::vector<std::string> variants;
};

const std::vector<FamilySpec>& family_specs() {
    static const std::vector<FamilySpec> specs = {
        {"walk", "walks", {"forward", "backward", "to the left", "to the right"}},
        {"run", "runs", {"forward", "backward", "to the left", "to the right"}},
        {"jump", "jumps", {"in place", "forward", "high"}},
        {"wave", "waves", {"with the left hand", "with the right hand", "with both hands"}},
        {"turn", "turns", {"left", "right"}},
        {"kick", "kicks", {"with the left leg", "with the right leg"}},
        {"punch", "punches", {"with the left arm", "with the right arm"}},
        {"squat", "squats", {"down"}},
        {"clap", "claps", {"hands"}},
        {"stretch", "stretches", {"arms up"}},
    };
    return specs;
}

const char* const kSpeedWords[3] = {"slowly", "", "quickly"};
constexpr double kSpeedFactor[3] = {0.6, 1.0, 1.6};

Eigen::Matrix3d rot_x(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix(); }
Eigen::Matrix3d rot_y(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix(); }
Eigen::Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

// Angle parameters of the desk skeleton; index 0 is the left side.
struct Pose {
    Eigen::Vector3d root{0.0, 0.95, 0.0};
    double yaw = 0.0;
    double lean = 0.0;  // positive tips the chest forward
    double roll = 0.0;
    double arm_swing[2] = {0.0, 0.0};  // forward
    double arm_raise[2] = {0.0, 0.0};  // outward
    double leg_swing[2] = {0.0, 0.0};
    double leg_raise[2] = {0.0, 0.0};
};

void place(const Skeleton& sk, const Pose& p, MotionSequence& m, std::size_t t) {
    const Eigen::Matrix3d ry = rot_y(p.yaw);
    const Eigen::Matrix3d torso = ry * rot_z(-p.lean) * rot_x(p.roll);
    const Eigen::Vector3d chest = p.root + torso * sk.offsets[3];
    m.set_joint(t, 0, p.root);
    m.set_joint(t, 3, chest);
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? 1.0 : -1.0;
        const auto hip_j = static_cast<std::size_t>(1 + side);
        const Eigen::Vector3d hip = p.root + ry * sk.offsets[hip_j];
        m.set_joint(t, hip_j, hip);
        const Eigen::Matrix3d arm = torso * rot_z(p.arm_swing[side]) * rot_x(sign * p.arm_raise[side]);
        m.set_joint(t, static_cast<std::size_t>(4 + side), chest + arm * sk.offsets[static_cast<std::size_t>(4 + side)]);
        const Eigen::Matrix3d leg = ry * rot_z(p.leg_swing[side]) * rot_x(sign * p.leg_raise[side]);
        m.set_joint(t, static_cast<std::size_t>(6 + side), hip + leg * sk.offsets[static_cast<std::size_t>(6 + side)]);
    }
}

double bump(double u) {
    const double s = std::sin(kPi * u);
    return s * s;
}

double frac(double x) { return x - std::floor(x); }

Pose text_pose(const TextCombo& c, double t, double dur, double amp, double phase) {
    Pose p;
    const double sp = kSpeedFactor[c.speed];
    const int v = static_cast<int>(c.variant);
    const double idle = 0.01 * std::sin(2.0 * kPi * 0.3 * t + phase);
    p.root.y() += idle;
    if (c.family == "walk" || c.family == "run") {
        const bool run = c.family == "run";
        const double f = (run ? 2.6 : 1.7) * sp;
        const double speed = (run ? 2.6 : 1.1) * sp;
        const double ph = 2.0 * kPi * f * t + phase;
        const double leg = amp * (run ? 0.75 : 0.45) * std::sin(ph);
        const double arm = amp * (run ? 0.7 : 0.35) * std::sin(ph);
        static const Eigen::Vector3d dirs[4] = {{1, 0, 0}, {-1, 0, 0}, {0, 0, -1}, {0, 0, 1}};
        p.root += dirs[v] * speed * t;
        p.root.y() -= (run ? 0.06 : 0.025) * std::abs(std::cos(ph));
        if (v < 2) {
            p.leg_swing[0] = leg;
            p.leg_swing[1] = -leg;
        } else {
            p.leg_raise[0] = 0.5 * std::abs(leg) * (v == 2 ? 1.0 : 0.3);
            p.leg_raise[1] = 0.5 * std::abs(leg) * (v == 3 ? 1.0 : 0.3);
        }
        p.arm_swing[0] = -arm;
        p.arm_swing[1] = arm;
        if (run) p.arm_raise[0] = p.arm_raise[1] = 0.15;
        p.lean = run ? (v == 1 ? -0.1 : 0.2) : 0.03;
    } else if (c.family == "jump") {
        const double period = 1.0 / sp;
        const double u = frac(t / period + phase / (2.0 * kPi));
        const double air = 4.0 * u * (1.0 - u);
        const double height = v == 2 ? 0.5 : 0.25;
        p.root.y() += amp * height * air;
        if (v == 1) p.root.x() += 0.9 * sp * t;
        p.arm_raise[0] = p.arm_raise[1] = amp * 2.3 * air;
        p.leg_swing[0] = p.leg_swing[1] = amp * 0.3 * air;
    } else if (c.family == "wave") {
        const double w = std::sin(2.0 * kPi * 1.5 * sp * t + phase);
        for (int side = 0; side < 2; ++side) {
            if (v == 2 || v == side) p.arm_raise[side] = 2.3 + amp * 0.45 * w;
        }
    } else if (c.family == "turn") {
        const double dir = v == 0 ? 1.0 : -1.0;
        p.yaw = dir * 0.5 * kPi * sp * amp * t / dur;
        const double step = 0.15 * std::sin(2.0 * kPi * 1.4 * sp * t + phase);
        p.leg_swing[0] = step;
        p.leg_swing[1] = -step;
    } else if (c.family == "kick") {
        const double u = frac(t * sp / 1.6 + phase / (2.0 * kPi));
        const double b = amp * bump(u);
        p.leg_swing[v] = 1.1 * b;
        p.arm_swing[1 - v] = 0.4 * b;
        p.arm_raise[0] = p.arm_raise[1] = 0.3;
        p.lean = -0.15 * b;
    } else if (c.family == "punch") {
        const double u = frac(t * sp / 0.9 + phase / (2.0 * kPi));
        const double b = amp * bump(u);
        p.arm_swing[v] = 0.4 + 1.1 * b;
        p.arm_swing[1 - v] = 0.7;
        p.arm_raise[v] = 0.15;
        p.lean = 0.05 + 0.1 * b;
    } else if (c.family == "squat") {
        const double u = frac(t * sp / 2.0 + phase / (2.0 * kPi));
        const double b = amp * bump(u);
        p.leg_swing[0] = p.leg_swing[1] = 0.8 * b;
        p.root.y() -= 0.85 * (1.0 - std::cos(0.8 * b));
        p.lean = 0.45 * b;
        p.arm_swing[0] = p.arm_swing[1] = 1.3 * b;
    } else if (c.family == "clap") {
        const double w = std::sin(2.0 * kPi * 2.0 * sp * t + phase);
        p.arm_swing[0] = p.arm_swing[1] = 1.2;
        p.arm_raise[0] = p.arm_raise[1] = -0.1 + amp * 0.25 * w;
    } else if (c.family == "stretch") {
        const double u = frac(t * sp / 3.2 + phase / (2.0 * kPi));
        const double b = amp * bump(u);
        p.arm_raise[0] = p.arm_raise[1] = 2.8 * b;
        p.lean = -0.2 * b;
        p.root.y() += 0.03 * b;
    } else {
        throw ConfigError("unknown action family '" + c.family + "'");
    }
    return p;
}

struct GenreSpec {
    std::string name;
    double beat_hz;
    double tone_hz;
};

const std::vector<GenreSpec>& genre_specs() {
    static const std::vector<GenreSpec> specs = {
        {"bounce", 2.0, 220.0}, {"sway", 1.5, 330.0}, {"pump", 2.5, 440.0}, {"stomp", 2.0, 165.0}};
    return specs;
}

// s = cos(pi f (t - t0)) has zero derivative exactly at the beats, so every
// joint comes to rest there.
Pose dance_pose(const std::string& genre, double s, double amp, double variation) {
    Pose p;
    if (genre == "bounce") {
        p.root.y() -= amp * 0.05 * (1.0 - s);
        p.arm_swing[0] = p.arm_swing[1] = amp * 0.3 * s + variation;
        p.arm_raise[0] = p.arm_raise[1] = 0.3 + amp * 0.2 * s;
        p.lean = amp * 0.1 * (1.0 - s);
    } else if (genre == "sway") {
        p.roll = amp * 0.2 * s;
        p.root.z() += amp * 0.06 * s;
        p.arm_raise[0] = 0.6 + amp * 0.35 * s + variation;
        p.arm_raise[1] = 0.6 - amp * 0.35 * s + variation;
    } else if (genre == "pump") {
        p.arm_raise[0] = p.arm_raise[1] = 1.6 + amp * 0.9 * s;
        p.arm_swing[0] = p.arm_swing[1] = 0.3 + variation;
        p.root.y() += amp * 0.03 * s;
    } else if (genre == "stomp") {
        p.leg_swing[0] = amp * 0.35 * s;
        p.leg_swing[1] = -amp * 0.35 * s;
        p.arm_swing[0] = -amp * 0.4 * s;
        p.arm_swing[1] = amp * 0.4 * s;
        p.lean = 0.1 + variation;
        p.root.y() -= amp * 0.03 * s * s;
    } else {
        throw ConfigError("unknown dance genre '" + genre + "'");
    }
    return p;
}

void append_tone(std::vector<double>& wave, double rate, double hz, double gain, Rng& rng) {
    const double ph = rng.uniform(0.0, 2.0 * kPi);
    for (std::size_t i = 0; i < wave.size(); ++i) {
        const double t = static_cast<double>(i) / rate;
        wave[i] += gain * (std::sin(2.0 * kPi * hz * t + ph) + 0.5 * std::sin(4.0 * kPi * hz * t + ph) +
                           0.25 * std::sin(6.0 * kPi * hz * t + ph));
    }
}

MotionSequence randomize_placement(const MotionSequence& m, Rng& rng) {
    // Arbitrary start heading and position; normalize_heading removes both.
    MotionSequence out = rotate_about_vertical(m, rng.uniform(-kPi, kPi));
    const double dx = rng.uniform(-2.0, 2.0);
    const double dz = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i + 2 < out.frames.size(); i += 3) {
        out.frames[i] += dx;
        out.frames[i + 2] += dz;
    }
    return out;
}

// Largest-remainder allocation of n samples over weighted families.
std::vector<std::size_t> allocate(std::size_t n, const std::vector<int>& weights) {
    long total = 0;
    for (int w : weights) total += w;
    std::vector<std::size_t> out(weights.size(), 0);
    if (total == 0) return out;
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(n) * weights[i] / static_cast<double>(total);
        out[i] = static_cast<std::size_t>(std::floor(exact));
        used += out[i];
        if (weights[i] > 0) rem.emplace_back(-(exact - std::floor(exact)), i);
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; used < n && k < rem.size(); ++k, ++used) ++out[rem[k].second];
    return out;
}

}  // namespace

const std::vector<std::string>& text_families() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& f : family_specs()) v.push_back(f.name);
        return v;
    }();
    return names;
}

const std::vector<std::string>& dance_genres() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& g : genre_specs()) v.push_back(g.name);
        return v;
    }();
    return names;
}

bool is_dance_genre(const std::string& family) {
    const auto& g = dance_genres();
    return std::find(g.begin(), g.end(), family) != g.end();
}

double genre_beat_hz(const std::string& genre) {
    for (const auto& g : genre_specs())
        if (g.name == genre) return g.beat_hz;
    throw ConfigError("unknown dance genre '" + genre + "'");
}

std::vector<TextCombo> text_combos(const std::string& family) {
    for (const auto& f : family_specs()) {
        if (f.name != family) continue;
        std::vector<TextCombo> out;
        for (std::size_t v = 0; v < f.variants.size(); ++v) {
            for (std::size_t s = 0; s < 3; ++s) {
                std::string d = "a person " + f.verb + " " + f.variants[v];
                if (*kSpeedWords[s]) d += std::string(" ") + kSpeedWords[s];
                out.push_back({f.name, v, s, d});
            }
        }
        return out;
    }
    throw ConfigError("unknown action family '" + family + "'");
}

Vocabulary synth_vocabulary() {
    Vocabulary v;
    for (const auto& f : text_families())
        for (const auto& c : text_combos(f))
            for (const auto& w : split_words(c.description)) v.add(w);
    return v;
}

SynthConfig::SynthConfig() {
    for (const auto& f : text_families()) counts[f] = 2;
    for (const auto& g : dance_genres()) counts[g] = 2;
}

void SynthConfig::validate() const {
    if (!(fps > 0.0)) throw ConfigError("fps must be positive");
    if (frames < 5) throw ConfigError("frames must be at least 5");
    if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
    long total = 0;
    for (const auto& [name, n] : counts) {
        const auto& tf = text_families();
        if (std::find(tf.begin(), tf.end(), name) == tf.end() && !is_dance_genre(name)) {
            throw ConfigError("unknown family name '" + name + "'");
        }
        if (n < 0) throw ConfigError("negative count for family '" + name + "'");
        total += n;
    }
    if (total == 0 && train_count + test_count > 0) throw ConfigError("every family count is zero");
    if (beat_jitter < 0.0 || beat_jitter >= 0.5) throw ConfigError("beat_jitter must be in [0, 0.5)");
}

MotionSequence synth_text_motion(const TextCombo& combo, double fps, std::size_t frames, double amplitude_jitter,
                                 Rng& rng) {
    const Skeleton sk = Skeleton::desk8();
    const double amp = 1.0 + rng.uniform(-amplitude_jitter, amplitude_jitter);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double dur = static_cast<double>(frames) / fps;
    MotionSequence m(fps, sk.joint_count(), frames);
    for (std::size_t t = 0; t < frames; ++t) {
        place(sk, text_pose(combo, static_cast<double>(t) / fps, dur, amp, phase), m, t);
    }
    return normalize_heading(randomize_placement(m, rng));
}

DanceClip synth_dance(const std::string& genre, double fps, std::size_t frames, double sample_rate, double beat_hz,
                      Rng& rng) {
    const Skeleton sk = Skeleton::desk8();
    double tone = 0.0;
    for (const auto& g : genre_specs())
        if (g.name == genre) tone = g.tone_hz;
    if (tone == 0.0) throw ConfigError("unknown dance genre '" + genre + "'");
    if (!(beat_hz > 0.0)) throw ConfigError("beat rate must be positive");

    DanceClip clip;
    clip.beat_hz = beat_hz;
    const double amp = 1.0 + rng.uniform(-0.15, 0.15);
    const double variation = rng.uniform(-0.1, 0.1);
    const double t0 = rng.uniform(0.0, 1.0 / beat_hz);
    const double dur = static_cast<double>(frames) / fps;
    clip.motion = MotionSequence(fps, sk.joint_count(), frames);
    for (std::size_t t = 0; t < frames; ++t) {
        const double sec = static_cast<double>(t) / fps;
        const double s = std::cos(kPi * beat_hz * (sec - t0));
        place(sk, dance_pose(genre, s, amp, variation), clip.motion, t);
    }
    clip.motion = normalize_heading(randomize_placement(clip.motion, rng));
    for (double b = t0; b < dur; b += 1.0 / beat_hz) clip.beats.push_back(b);

    const auto n = static_cast<std::size_t>(std::llround(dur * sample_rate));
    clip.waveform.assign(n, 0.0);
    append_tone(clip.waveform, sample_rate, tone, 0.05, rng);
    const auto click_len = static_cast<std::size_t>(0.02 * sample_rate);
    for (double b : clip.beats) {
        const auto start = static_cast<std::size_t>(std::llround(b * sample_rate));
        for (std::size_t i = 0; i < click_len && start + i < n; ++i) {
            const double env = std::exp(-6.0 * static_cast<double>(i) / static_cast<double>(click_len));
            clip.waveform[start + i] += 0.8 * env * rng.uniform(-1.0, 1.0);
        }
    }
    return clip;
}

SynthResult synth_samples(const SynthConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SynthResult res;
    res.vocab = synth_vocabulary();

    std::vector<std::string> fams;
    std::vector<int> weights;
    for (const auto& f : text_families()) {
        fams.push_back(f);
        weights.push_back(cfg.counts.count(f) ? cfg.counts.at(f) : 0);
    }
    for (const auto& g : dance_genres()) {
        fams.push_back(g);
        weights.push_back(cfg.counts.count(g) ? cfg.counts.at(g) : 0);
    }
    AudioFeatureConfig acfg = cfg.audio;
    acfg.frame_rate = cfg.fps;

    std::uint64_t global = 0;
    for (const Split split : {Split::train, Split::test}) {
        const std::size_t n = split == Split::train ? cfg.train_count : cfg.test_count;
        const auto alloc = allocate(n, weights);
        // Round-robin across families so every prefix of the split is mixed.
        std::vector<std::size_t> used(fams.size(), 0);
        std::size_t produced = 0;
        const std::string prefix = to_string(split) + "_";
        while (produced < n) {
            for (std::size_t f = 0; f < fams.size() && produced < n; ++f) {
                if (used[f] >= alloc[f]) continue;
                const std::size_t k = used[f]++;
                Rng rng(mix_seed(seed, global++));
                SynthSample s;
                char idbuf[32];
                std::snprintf(idbuf, sizeof idbuf, "%s%05zu", prefix.c_str(), produced);
                s.entry.id = idbuf;
                s.entry.split = split;
                s.family = fams[f];
                s.entry.motion = "motion/" + s.entry.id + ".motion";
                if (!is_dance_genre(fams[f])) {
                    const auto combos = text_combos(fams[f]);
                    // Test split starts half-way through the cycle so both splits see every combo early.
                    const std::size_t offset = split == Split::test ? combos.size() / 2 : 0;
                    const auto& combo = combos[(k + offset) % combos.size()];
                    s.entry.modality = Modality::text;
                    s.entry.cond = "cond/" + s.entry.id + ".txt";
                    s.text = combo.description;
                    s.motion = synth_text_motion(combo, cfg.fps, cfg.frames, cfg.amplitude_jitter, rng);
                } else {
                    const double hz = genre_beat_hz(fams[f]) * (1.0 + rng.uniform(-cfg.beat_jitter, cfg.beat_jitter));
                    auto clip = synth_dance(fams[f], cfg.fps, cfg.frames, cfg.sample_rate, hz, rng);
                    s.entry.modality = Modality::audio;
                    s.entry.cond = "cond/" + s.entry.id + ".feat";
                    s.motion = std::move(clip.motion);
                    s.audio = resample_features(extract_audio_features(clip.waveform, cfg.sample_rate, acfg), cfg.fps,
                                                cfg.frames);
                    std::vector<double> interior;
                    const double lo = 2.0 / cfg.fps;
                    const double hi = static_cast<double>(cfg.frames - 3) / cfg.fps;
                    for (double b : clip.beats)
                        if (b >= lo && b <= hi) interior.push_back(b);
                    s.audio.beat_times = interior;
                }
                res.samples.push_back(std::move(s));
                ++produced;
            }
        }
    }
    return res;
}

void write_dataset(const std::filesystem::path& dir, const SynthResult& result) {
    std::filesystem::create_directories(dir / "motion");
    std::filesystem::create_directories(dir / "cond");
    std::vector<ManifestEntry> entries;
    for (const auto& s : result.samples) {
        save_motion(dir / s.entry.motion, s.motion);
        if (s.entry.modality == Modality::text) {
            write_file_atomic(dir / s.entry.cond, s.text + "\n");
        } else {
            save_features(dir / s.entry.cond, s.audio);
        }
        entries.push_back(s.entry);
    }
    save_vocabulary(dir / kVocabularyName, result.vocab);
    write_file_atomic(dir / kManifestName, serialize_manifest(entries));
}

Dataset to_dataset(const SynthResult& result) {
    Dataset ds;
    ds.vocab = result.vocab;
    for (const auto& s : result.samples) {
        Sample out;
        out.id = s.entry.id;
        out.modality = s.entry.modality;
        out.split = s.entry.split;
        out.motion = s.motion;
        if (s.entry.modality == Modality::text) {
            out.text = tokenize(s.text, ds.vocab);
        } else {
            out.audio = s.audio;
        }
        ds.samples.push_back(std::move(out));
    }
    return ds;
}

std::vector<ManifestEntry> synth_dataset(const SynthConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir) {
    const auto res = synth_samples(cfg, seed);
    write_dataset(dir, res);
    std::vector<ManifestEntry> entries;
    for (const auto& s : res.samples) entries.push_back(s.entry);
    return entries;
}

}  // namespace ude::motion
